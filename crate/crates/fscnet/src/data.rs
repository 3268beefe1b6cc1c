//! Raw dataset loading and task splitting.
//!
//! MNIST arrives as the four standard IDX files (big-endian headers),
//! CIFAR-10 as the six binary batch files (1 label byte + 3072 image
//! bytes per record). Pixels are scaled by 1/255 and then standardized
//! with a single scalar mean/std computed over all training pixels; the
//! test split reuses the train statistics.
//!
//! Tasks are the five consecutive class pairs (0-1, 2-3, 4-5, 6-7, 8-9).
//! Labels stay global 10-way ids; evaluation is 10-way argmax.

use crate::error::{FscError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::path::Path;
use std::sync::Arc;

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub const CIFAR_FILES: [&str; 6] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
    "test_batch.bin",
];

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;
const CIFAR_RECORDS_PER_BATCH: usize = 10_000;

/// Fully materialized split with standardized inputs.
#[derive(Debug)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }
}

/// Index-based view into a shared [`Dataset`].
#[derive(Debug, Clone)]
pub struct DatasetView {
    base: Arc<Dataset>,
    indices: Vec<u32>,
}

impl DatasetView {
    pub fn full(base: Arc<Dataset>) -> Self {
        let indices = (0..base.len() as u32).collect();
        DatasetView { base, indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.base.feature_dim()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn label(&self, i: usize) -> u8 {
        self.base.labels[self.indices[i] as usize]
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        self.base.inputs.row(self.indices[i] as usize)
    }

    /// Materialize the rows at the given positions (into this view).
    pub fn gather(&self, positions: &[usize]) -> (Tensor, Vec<u8>) {
        let d = self.feature_dim();
        let mut data = Vec::with_capacity(positions.len() * d);
        let mut labels = Vec::with_capacity(positions.len());
        for &p in positions {
            data.extend_from_slice(self.input_row(p));
            labels.push(self.label(p));
        }
        (
            Tensor::new(positions.len(), d, data).expect("sized data"),
            labels,
        )
    }
}

/// One binary-pair task: classes (2t, 2t+1).
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub task_id: usize,
    pub class_pair: (u8, u8),
    pub train: DatasetView,
    pub test: DatasetView,
}

struct Reader {
    file: String,
    buf: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| FscError::Format {
            file: path.display().to_string(),
            offset: 0,
            detail: format!("cannot read: {e}"),
        })?;
        Ok(Reader {
            file: path.display().to_string(),
            buf,
            pos: 0,
        })
    }

    fn err(&self, detail: impl Into<String>) -> FscError {
        FscError::Format {
            file: self.file.clone(),
            offset: self.pos as u64,
            detail: detail.into(),
        }
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        if self.pos + 4 > self.buf.len() {
            return Err(self.err("truncated header"));
        }
        let b = &self.buf[self.pos..self.pos + 4];
        self.pos += 4;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err(format!(
                "truncated payload: need {n} bytes, have {}",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn expect_eof(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!(
                "trailing bytes: file is {} bytes, parsed {}",
                self.buf.len(),
                self.pos
            )));
        }
        Ok(())
    }
}

fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = Reader::open(path)?;
    let magic = r.read_u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(r.err(format!("bad magic {magic:#010x}, want {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = r.read_u32_be()? as usize;
    let rows = r.read_u32_be()? as usize;
    let cols = r.read_u32_be()? as usize;
    let pixels = r.take(n * rows * cols)?.to_vec();
    r.expect_eof()?;
    Ok((n, rows * cols, pixels))
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = Reader::open(path)?;
    let magic = r.read_u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(r.err(format!("bad magic {magic:#010x}, want {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = r.read_u32_be()? as usize;
    let labels = r.take(n)?.to_vec();
    r.expect_eof()?;
    for (i, &l) in labels.iter().enumerate() {
        if l > 9 {
            return Err(FscError::Format {
                file: path.display().to_string(),
                offset: (8 + i) as u64,
                detail: format!("label {l} out of range"),
            });
        }
    }
    Ok(labels)
}

/// Scalar mean/std over all training pixels (after 1/255 scaling).
fn train_stats(pixels: &[u8]) -> (f64, f64) {
    let n = pixels.len() as f64;
    let mean = pixels.iter().map(|&p| p as f64 / 255.0).sum::<f64>() / n;
    let var = pixels
        .iter()
        .map(|&p| {
            let v = p as f64 / 255.0 - mean;
            v * v
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

fn standardize(pixels: &[u8], n: usize, d: usize, mean: f64, std: f64) -> Result<Tensor> {
    let data: Vec<f64> = pixels
        .iter()
        .map(|&p| (p as f64 / 255.0 - mean) / std)
        .collect();
    Tensor::new(n, d, data)
}

/// Load the four IDX files from `dir`. Train statistics are applied to
/// both splits.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let (n_train, d, train_px) = read_idx_images(&dir.join(MNIST_FILES[0]))?;
    let train_labels = read_idx_labels(&dir.join(MNIST_FILES[1]))?;
    let (n_test, d2, test_px) = read_idx_images(&dir.join(MNIST_FILES[2]))?;
    let test_labels = read_idx_labels(&dir.join(MNIST_FILES[3]))?;
    if train_labels.len() != n_train || test_labels.len() != n_test || d != d2 {
        return Err(FscError::Format {
            file: dir.display().to_string(),
            offset: 0,
            detail: "image/label counts disagree across files".into(),
        });
    }
    let (mean, std) = train_stats(&train_px);
    Ok((
        Dataset {
            inputs: standardize(&train_px, n_train, d, mean, std)?,
            labels: train_labels,
        },
        Dataset {
            inputs: standardize(&test_px, n_test, d, mean, std)?,
            labels: test_labels,
        },
    ))
}

/// Load the six CIFAR-10 binary batches from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(Dataset, Dataset)> {
    let d = CIFAR_RECORD - 1;
    let read_batch = |name: &str, px: &mut Vec<u8>, labels: &mut Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        let mut r = Reader::open(&path)?;
        if r.buf.len() != CIFAR_RECORDS_PER_BATCH * CIFAR_RECORD {
            return Err(r.err(format!(
                "batch must be exactly {} bytes, got {}",
                CIFAR_RECORDS_PER_BATCH * CIFAR_RECORD,
                r.buf.len()
            )));
        }
        for i in 0..CIFAR_RECORDS_PER_BATCH {
            let rec = r.take(CIFAR_RECORD)?;
            let label = rec[0];
            if label > 9 {
                return Err(FscError::Format {
                    file: path.display().to_string(),
                    offset: (i * CIFAR_RECORD) as u64,
                    detail: format!("label {label} out of range"),
                });
            }
            labels.push(label);
            px.extend_from_slice(&rec[1..]);
        }
        Ok(())
    };

    let mut train_px = Vec::with_capacity(5 * CIFAR_RECORDS_PER_BATCH * d);
    let mut train_labels = Vec::with_capacity(5 * CIFAR_RECORDS_PER_BATCH);
    for name in &CIFAR_FILES[..5] {
        read_batch(name, &mut train_px, &mut train_labels)?;
    }
    let mut test_px = Vec::with_capacity(CIFAR_RECORDS_PER_BATCH * d);
    let mut test_labels = Vec::with_capacity(CIFAR_RECORDS_PER_BATCH);
    read_batch(CIFAR_FILES[5], &mut test_px, &mut test_labels)?;

    let (mean, std) = train_stats(&train_px);
    let n_train = train_labels.len();
    let n_test = test_labels.len();
    Ok((
        Dataset {
            inputs: standardize(&train_px, n_train, d, mean, std)?,
            labels: train_labels,
        },
        Dataset {
            inputs: standardize(&test_px, n_test, d, mean, std)?,
            labels: test_labels,
        },
    ))
}

/// Partition into the 5 binary-pair tasks. Order within a task preserves
/// source order; shuffling happens at batching.
pub fn split_tasks(train: &Arc<Dataset>, test: &Arc<Dataset>) -> Result<Vec<TaskSplit>> {
    let select = |ds: &Arc<Dataset>, pair: (u8, u8)| -> DatasetView {
        let indices = ds
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == pair.0 || l == pair.1)
            .map(|(i, _)| i as u32)
            .collect();
        DatasetView {
            base: Arc::clone(ds),
            indices,
        }
    };
    let mut tasks = Vec::with_capacity(5);
    for t in 0..5u8 {
        let pair = (2 * t, 2 * t + 1);
        tasks.push(TaskSplit {
            task_id: t as usize,
            class_pair: pair,
            train: select(train, pair),
            test: select(test, pair),
        });
    }
    let covered: usize = tasks.iter().map(|t| t.train.len()).sum();
    if covered != train.len() {
        return Err(FscError::Parameter(format!(
            "labels outside [0,9]: {} of {} samples covered",
            covered,
            train.len()
        )));
    }
    Ok(tasks)
}

/// One epoch over `view`: a single seeded shuffle emitted in batches,
/// final partial batch included.
pub struct BatchIter<'a> {
    view: &'a DatasetView,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = (Tensor, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.view.gather(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}

pub fn batches<'a>(view: &'a DatasetView, batch_size: usize, rng: &mut Rng) -> BatchIter<'a> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..view.len()).collect();
    rng.shuffle(&mut order);
    BatchIter {
        view,
        order,
        pos: 0,
        batch_size,
    }
}

/// Data directory from the FSCNET_DATA_DIR environment variable.
/// Datasets live in `mnist/` and `cifar10/` subdirectories.
pub fn data_dir_from_env() -> Option<std::path::PathBuf> {
    std::env::var_os("FSCNET_DATA_DIR").map(std::path::PathBuf::from)
}

/// Human-readable instructions printed when dataset files are missing.
pub fn retrieval_instructions(dataset: &str) -> String {
    match dataset {
        "mnist" => format!(
            "MNIST files missing. Place the four raw IDX files\n  {}\nunder <data-dir>/mnist/ (download from an MNIST mirror and gunzip).",
            MNIST_FILES.join("\n  ")
        ),
        _ => format!(
            "CIFAR-10 files missing. Place the six binary batch files\n  {}\nunder <data-dir>/cifar10/ (from cifar-10-binary.tar.gz).",
            CIFAR_FILES.join("\n  ")
        ),
    }
}
