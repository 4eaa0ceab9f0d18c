//! On-disk IFS definition format: TOML with `dim`, `theta` (or `lambda`),
//! optional `probs` (uniform when absent), `digits` as row vectors, and an
//! optional `[rotation]` table holding either an explicit `matrix` or
//! block `angles`. A missing rotation means the identity.
//!
//! ```toml
//! dim = 1
//! theta = 3.0
//! digits = [[0.0], [2.0]]
//! probs = [0.5, 0.5]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::ifs::{HomogeneousIfs, IfsError, RotationSpec};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read IFS file: {0}")]
    Read(#[from] std::io::Error),
    #[error("cannot parse IFS file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid IFS file: {0}")]
    Semantic(&'static str),
    #[error(transparent)]
    Construct(#[from] IfsError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IfsFile {
    dim: usize,
    theta: Option<f64>,
    lambda: Option<f64>,
    digits: Vec<Vec<f64>>,
    probs: Option<Vec<f64>>,
    rotation: Option<RotationFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationFile {
    matrix: Option<Vec<Vec<f64>>>,
    angles: Option<Vec<f64>>,
}

/// Parse an IFS definition from TOML text.
pub fn parse_ifs(text: &str) -> Result<HomogeneousIfs, IoError> {
    let file: IfsFile = toml::from_str(text)?;
    let theta = match (file.theta, file.lambda) {
        (Some(t), None) => t,
        (None, Some(l)) => {
            if !(l > 0.0) {
                return Err(IoError::Semantic("lambda must be positive"));
            }
            1.0 / l
        }
        (Some(_), Some(_)) => return Err(IoError::Semantic("give either theta or lambda")),
        (None, None) => return Err(IoError::Semantic("missing theta (or lambda)")),
    };
    if file.digits.is_empty() {
        return Err(IoError::Semantic("digits must be nonempty"));
    }
    let digits: Vec<DVector<f64>> = file
        .digits
        .iter()
        .map(|row| DVector::from_row_slice(row))
        .collect();
    let probs = match file.probs {
        Some(p) => p,
        None => vec![1.0 / digits.len() as f64; digits.len()],
    };
    let rotation = match file.rotation {
        None => RotationSpec::ExplicitMatrix(DMatrix::identity(file.dim, file.dim)),
        Some(RotationFile {
            matrix: Some(_),
            angles: Some(_),
        }) => return Err(IoError::Semantic("rotation: give either matrix or angles")),
        Some(RotationFile {
            matrix: Some(rows),
            angles: None,
        }) => {
            if rows.len() != file.dim || rows.iter().any(|r| r.len() != file.dim) {
                return Err(IoError::Semantic("rotation matrix must be dim x dim"));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            RotationSpec::ExplicitMatrix(DMatrix::from_row_slice(file.dim, file.dim, &flat))
        }
        Some(RotationFile {
            matrix: None,
            angles: Some(a),
        }) => RotationSpec::BlockAngles(a),
        Some(RotationFile {
            matrix: None,
            angles: None,
        }) => return Err(IoError::Semantic("rotation table is empty")),
    };
    Ok(HomogeneousIfs::new(
        file.dim, theta, rotation, digits, probs,
    )?)
}

/// Load an IFS definition from a file.
pub fn load_ifs(path: &Path) -> Result<HomogeneousIfs, IoError> {
    parse_ifs(&std::fs::read_to_string(path)?)
}

/// Render an IFS back to the definition format. Shortest-round-trip float
/// formatting keeps the output byte-stable.
pub fn to_toml(ifs: &HomogeneousIfs) -> String {
    let mut out = String::new();
    out.push_str(&format!("dim = {}\n", ifs.dim));
    out.push_str(&format!("theta = {:?}\n", ifs.theta));
    let rows: Vec<String> = ifs
        .digits
        .iter()
        .map(|d| {
            let xs: Vec<String> = d.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", xs.join(", "))
        })
        .collect();
    out.push_str(&format!("digits = [{}]\n", rows.join(", ")));
    let ps: Vec<String> = ifs.probs.iter().map(|p| format!("{p:?}")).collect();
    out.push_str(&format!("probs = [{}]\n", ps.join(", ")));
    out.push_str("\n[rotation]\n");
    match &ifs.rotation {
        RotationSpec::BlockAngles(angles) => {
            let xs: Vec<String> = angles.iter().map(|a| format!("{a:?}")).collect();
            out.push_str(&format!("angles = [{}]\n", xs.join(", ")));
        }
        RotationSpec::ExplicitMatrix(m) => {
            let rows: Vec<String> = (0..m.nrows())
                .map(|i| {
                    let xs: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
                    format!("[{}]", xs.join(", "))
                })
                .collect();
            out.push_str(&format!("matrix = [{}]\n", rows.join(", ")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let ifs = parse_ifs(
            r#"
dim = 1
theta = 3.0
digits = [[0.0], [2.0]]
"#,
        )
        .unwrap();
        assert_eq!(ifs.dim, 1);
        assert_eq!(ifs.theta, 3.0);
        assert_eq!(ifs.probs, vec![0.5, 0.5]);
        assert!(ifs.validate().is_valid());
    }

    #[test]
    fn lambda_and_angles() {
        let ifs = parse_ifs(
            r#"
dim = 2
lambda = 0.5
digits = [[0.0, 0.0], [1.0, 0.0]]
probs = [0.25, 0.75]

[rotation]
angles = [0.2]
"#,
        )
        .unwrap();
        assert_eq!(ifs.theta, 2.0);
        assert!(matches!(ifs.rotation, RotationSpec::BlockAngles(_)));
        assert!(ifs.validate().is_valid());
    }

    #[test]
    fn explicit_matrix() {
        let ifs = parse_ifs(
            r#"
dim = 2
theta = 2.0
digits = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]

[rotation]
matrix = [[0.0, 1.0], [-1.0, 0.0]]
"#,
        )
        .unwrap();
        let report = ifs.validate();
        assert!(report.orthogonal_ok);
        assert!(report.spanning);
    }

    #[test]
    fn rejects_conflicting_scale() {
        let err = parse_ifs("dim = 1\ntheta = 2.0\nlambda = 0.5\ndigits = [[0.0]]\n").unwrap_err();
        assert!(matches!(err, IoError::Semantic(_)));
    }

    #[test]
    fn rejects_bad_matrix_shape() {
        let err = parse_ifs(
            "dim = 2\ntheta = 2.0\ndigits = [[0.0, 0.0]]\n[rotation]\nmatrix = [[1.0]]\n",
        )
        .unwrap_err();
        assert!(matches!(err, IoError::Semantic(_)));
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(parse_ifs("dim = 1\ntheta = 2.0\ndigits = [[0.0]]\nbogus = 1\n").is_err());
    }

    #[test]
    fn dimension_mismatch_propagates() {
        let err = parse_ifs("dim = 2\ntheta = 2.0\ndigits = [[0.0]]\n").unwrap_err();
        assert!(matches!(err, IoError::Construct(_)));
    }

    #[test]
    fn round_trip_through_writer() {
        let text = r#"
dim = 2
theta = 2.5
digits = [[0.0, 0.0], [1.0, 0.25]]
probs = [0.3, 0.7]

[rotation]
angles = [0.37]
"#;
        let ifs = parse_ifs(text).unwrap();
        let back = parse_ifs(&to_toml(&ifs)).unwrap();
        assert_eq!(back.dim, ifs.dim);
        assert_eq!(back.theta, ifs.theta);
        assert_eq!(back.digits, ifs.digits);
        assert_eq!(back.probs, ifs.probs);
        assert_eq!(back.rotation, ifs.rotation);
    }
}
