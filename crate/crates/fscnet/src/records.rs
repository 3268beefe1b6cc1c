//! Run records and the fixed CSV schema.
//!
//! One row per seed. Percentages print with 2 decimal places. The wall
//! time column is informational only and excluded from all determinism
//! contracts. Methods without a slow network repeat the NN1 values in the
//! NN2 columns so every row has the full schema.

use crate::error::{FscError, Result};
use crate::metrics::{forgetting, retention, AccuracyMatrix};
use sha2::{Digest, Sha256};

/// Versioned CSV header; changing the schema requires bumping this.
pub const CSV_HEADER: &str = "seed,method,dataset,lambda_consol,\
acc_task0_nn1,acc_task1_nn1,acc_task2_nn1,acc_task3_nn1,acc_task4_nn1,\
acc_task0_nn2,acc_task1_nn2,acc_task2_nn2,acc_task3_nn2,acc_task4_nn2,\
retention_nn1,retention_nn2,forgetting_nn1,forgetting_nn2,\
config_hash,wall_time_s";

/// One seed's complete result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub method: String,
    pub dataset: String,
    pub lambda_consol: f64,
    pub acc_nn1: Vec<f64>,
    pub acc_nn2: Vec<f64>,
    pub retention_nn1: f64,
    pub retention_nn2: f64,
    pub forgetting_nn1: f64,
    pub forgetting_nn2: f64,
    pub config_hash: String,
    /// Excluded from determinism checks.
    pub wall_time_s: f64,
}

/// First 8 bytes of SHA-256 over the canonical config text, hex-encoded.
/// The seed lives in its own column and is not part of the hash, so all
/// rows of a sweep share one hash.
pub fn config_hash(canonical_config: &str) -> String {
    let digest = Sha256::digest(canonical_config.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl RunRecord {
    /// Build a record from the two accuracy matrices of a finished run.
    /// Single-network methods pass the same matrix twice.
    #[allow(clippy::too_many_arguments)]
    pub fn from_matrices(
        seed: u64,
        method: &str,
        dataset: &str,
        lambda_consol: f64,
        nn1: &AccuracyMatrix,
        nn2: &AccuracyMatrix,
        config_hash: String,
        wall_time_s: f64,
    ) -> Result<Self> {
        if !nn1.is_complete() || !nn2.is_complete() {
            return Err(FscError::Parameter(
                "run record requires complete accuracy matrices".into(),
            ));
        }
        let acc_nn1 = nn1.final_row();
        let acc_nn2 = nn2.final_row();
        Ok(RunRecord {
            seed,
            method: method.to_string(),
            dataset: dataset.to_string(),
            lambda_consol,
            retention_nn1: retention(&acc_nn1)?,
            retention_nn2: retention(&acc_nn2)?,
            forgetting_nn1: forgetting(nn1)?,
            forgetting_nn2: forgetting(nn2)?,
            acc_nn1,
            acc_nn2,
            config_hash,
            wall_time_s,
        })
    }

    /// One CSV row matching [`CSV_HEADER`].
    pub fn to_csv_row(&self) -> String {
        let accs = |v: &[f64]| {
            v.iter()
                .map(|a| format!("{a:.2}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{},{},{},{},{},{},{:.2},{:.2},{:.2},{:.2},{},{:.2}",
            self.seed,
            self.method,
            self.dataset,
            self.lambda_consol,
            accs(&self.acc_nn1),
            accs(&self.acc_nn2),
            self.retention_nn1,
            self.retention_nn2,
            self.forgetting_nn1,
            self.forgetting_nn2,
            self.config_hash,
            self.wall_time_s,
        )
    }

    /// The row with the wall-time column blanked, for determinism
    /// comparisons.
    pub fn deterministic_row(&self) -> String {
        let row = self.to_csv_row();
        let cut = row.rfind(',').expect("schema has commas");
        row[..cut].to_string()
    }

    /// Parse one data row (header excluded).
    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        let want = CSV_HEADER.split(',').count();
        if fields.len() != want {
            return Err(FscError::Format {
                file: "<csv>".into(),
                offset: 0,
                detail: format!("row has {} fields, want {want}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| FscError::Format {
                file: "<csv>".into(),
                offset: 0,
                detail: format!("bad number {:?} in column {i}", fields[i]),
            })
        };
        let rec = RunRecord {
            seed: fields[0].parse().map_err(|_| FscError::Format {
                file: "<csv>".into(),
                offset: 0,
                detail: format!("bad seed {:?}", fields[0]),
            })?,
            method: fields[1].to_string(),
            dataset: fields[2].to_string(),
            lambda_consol: num(3)?,
            acc_nn1: (4..9).map(num).collect::<Result<_>>()?,
            acc_nn2: (9..14).map(num).collect::<Result<_>>()?,
            retention_nn1: num(14)?,
            retention_nn2: num(15)?,
            forgetting_nn1: num(16)?,
            forgetting_nn2: num(17)?,
            config_hash: fields[18].to_string(),
            wall_time_s: num(19)?,
        };
        // recomputed-retention invariant (2dp rounding tolerance)
        let check = retention(&rec.acc_nn2)?;
        if (check - rec.retention_nn2).abs() > 0.011 {
            return Err(FscError::Format {
                file: "<csv>".into(),
                offset: 0,
                detail: format!(
                    "retention_nn2 {} disagrees with mean of accuracies {check:.4}",
                    rec.retention_nn2
                ),
            });
        }
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(vals: &[[f64; 5]; 5]) -> AccuracyMatrix {
        let mut m = AccuracyMatrix::new(5);
        for j in 0..5 {
            for i in 0..=j {
                m.record(i, j, vals[i][j - i]);
            }
        }
        m
    }

    fn sample() -> RunRecord {
        let nn1 = matrix(&[[98.0, 95.0, 92.0, 90.0, 88.0]; 5]);
        let nn2 = matrix(&[[97.0, 96.0, 95.0, 94.0, 93.0]; 5]);
        RunRecord::from_matrices(42, "fscnet", "mnist", 0.0, &nn1, &nn2, config_hash("k = v"), 12.34)
            .unwrap()
    }

    #[test]
    fn header_and_row_field_counts_agree() {
        let rec = sample();
        assert_eq!(
            rec.to_csv_row().split(',').count(),
            CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn retention_is_recomputed_mean() {
        let rec = sample();
        let mean = rec.acc_nn2.iter().sum::<f64>() / 5.0;
        assert!((rec.retention_nn2 - mean).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_through_csv() {
        let rec = sample();
        let parsed = RunRecord::parse_csv_row(&rec.to_csv_row()).unwrap();
        assert_eq!(parsed.seed, rec.seed);
        assert_eq!(parsed.method, rec.method);
        assert_eq!(parsed.config_hash, rec.config_hash);
        assert!((parsed.retention_nn2 - rec.retention_nn2).abs() < 0.01);
    }

    #[test]
    fn deterministic_row_drops_wall_time() {
        let mut a = sample();
        let mut b = sample();
        a.wall_time_s = 1.0;
        b.wall_time_s = 99.0;
        assert_ne!(a.to_csv_row(), b.to_csv_row());
        assert_eq!(a.deterministic_row(), b.deterministic_row());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = config_hash("lr = 0.001");
        let b = config_hash("lr = 0.001");
        let c = config_hash("lr = 0.002");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(RunRecord::parse_csv_row("1,2,3").is_err());
        let rec = sample();
        let row = rec.to_csv_row().replace("94.00", "10.00");
        // corrupted accuracy breaks the recomputed-retention invariant
        assert!(RunRecord::parse_csv_row(&row).is_err());
    }
}
