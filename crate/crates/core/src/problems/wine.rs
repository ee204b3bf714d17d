use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::mlp::{mlp_forward, mse_loss, MlpShape};
use super::{BoxDomain, Problem};
use crate::error::{Error, Result};
use crate::relax::Rng;
use crate::tape::{self, Tape, Var};

const FEATURES: usize = 11;

/// Red wine physicochemical features with a noisy quality target.
#[derive(Debug, Clone, PartialEq)]
pub struct WineDataset {
    /// Row-major `n x 11`.
    pub features: Vec<f64>,
    /// Quality plus one `exp(N(0, 1))` draw per row.
    pub targets: Vec<f64>,
    /// Quality as read from the file.
    pub quality: Vec<f64>,
}

impl WineDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub fn load_wine(path: impl AsRef<Path>, seed: u64) -> Result<WineDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_wine(&text, path, seed)
}

/// Parses the 12-column wine-quality layout (`;` or `,` separated, optional
/// quoted header row) and perturbs the last column with log-normal noise.
pub fn parse_wine(text: &str, path: impl Into<PathBuf>, seed: u64) -> Result<WineDataset> {
    let path = path.into();
    let err = |line: usize, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };
    let mut features = Vec::new();
    let mut quality = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let sep = if line.contains(';') { ';' } else { ',' };
        let cells: Vec<&str> = line.split(sep).map(|c| c.trim().trim_matches('"')).collect();
        if i == 0 && cells.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if cells.len() != FEATURES + 1 {
            return Err(err(i + 1, format!("expected 12 columns, found {}", cells.len())));
        }
        for (j, c) in cells.iter().enumerate() {
            let v: f64 = c
                .parse()
                .map_err(|_| err(i + 1, format!("column {}: cannot parse `{c}`", j + 1)))?;
            if j < FEATURES {
                features.push(v);
            } else {
                quality.push(v);
            }
        }
    }
    if quality.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    let mut rng = Rng::seed_from(seed);
    let targets = quality.iter().map(|q| q + rng.normal().exp()).collect();
    Ok(WineDataset {
        features,
        targets,
        quality,
    })
}

/// Full-batch MSE of the 11-128-1 network as a function of its flat
/// parameter vector, searched in `[-10, 10]^1665`.
#[derive(Debug, Clone)]
pub struct WineRegression {
    shape: MlpShape,
    features: Arc<Vec<f64>>,
    targets: Arc<Vec<f64>>,
    domain: BoxDomain,
}

impl WineRegression {
    pub fn new(data: &WineDataset) -> Result<Self> {
        let shape = MlpShape::default();
        Ok(WineRegression {
            shape,
            features: Arc::new(shape.with_bias_column(&data.features)),
            targets: Arc::new(data.targets.clone()),
            domain: BoxDomain::symmetric(shape.param_count(), 10.0)?,
        })
    }

    pub fn samples(&self) -> usize {
        self.targets.len()
    }
}

impl Problem for WineRegression {
    fn name(&self) -> &str {
        "wine"
    }

    fn dim(&self) -> usize {
        self.shape.param_count()
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn eval_rows(&self, tape: &mut Tape, pop: Var) -> tape::Result<Var> {
        let n = self.samples();
        let x = tape.constant(self.features.to_vec(), n, self.shape.inputs + 1)?;
        let y = tape.vector(self.targets.to_vec());
        let mut losses = Vec::with_capacity(pop.rows());
        for i in 0..pop.rows() {
            let params = tape.row(pop, i)?;
            let pred = mlp_forward(tape, self.shape, params, x)?;
            losses.push(mse_loss(tape, pred, y)?);
        }
        tape.concat_rows(&losses)
    }

    fn eval_point(&self, params: &[f64]) -> f64 {
        let k = self.shape.inputs + 1;
        let sse: f64 = self
            .features
            .chunks(k)
            .zip(self.targets.iter())
            .map(|(x, t)| {
                let r = self.shape.predict(params, &x[..self.shape.inputs]) - t;
                r * r
            })
            .sum();
        sse / self.samples() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\"fixed acidity\";\"volatile acidity\";\"citric acid\";\"residual sugar\";\"chlorides\";\"free sulfur dioxide\";\"total sulfur dioxide\";\"density\";\"pH\";\"sulphates\";\"alcohol\";\"quality\"
7.4;0.7;0;1.9;0.076;11;34;0.9978;3.51;0.56;9.4;5
7.8;0.88;0;2.6;0.098;25;67;0.9968;3.2;0.68;9.8;5
11.2;0.28;0.56;1.9;0.075;17;60;0.998;3.16;0.58;9.8;6
";

    #[test]
    fn parses_rows_and_perturbs_upward() {
        let d = parse_wine(SAMPLE, "sample.csv", 1).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features.len(), 33);
        assert_eq!(d.quality, vec![5.0, 5.0, 6.0]);
        assert!(d.targets.iter().zip(&d.quality).all(|(t, q)| t > q));
        assert_eq!(d, parse_wine(SAMPLE, "sample.csv", 1).unwrap());
        assert_ne!(d.targets, parse_wine(SAMPLE, "sample.csv", 2).unwrap().targets);
    }

    #[test]
    fn comma_separated_also_parses() {
        let text = SAMPLE.replace(';', ",");
        assert_eq!(parse_wine(&text, "x", 0).unwrap().len(), 3);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = SAMPLE.replace("7.8;0.88", "7.8;oops");
        let msg = parse_wine(&text, "w.csv", 0).unwrap_err().to_string();
        assert!(msg.contains("w.csv:3"), "{msg}");
        let short = format!("{SAMPLE}1;2;3\n");
        let msg = parse_wine(&short, "w.csv", 0).unwrap_err().to_string();
        assert!(msg.contains(":5:") && msg.contains("12 columns"), "{msg}");
    }

    #[test]
    fn missing_file_names_path() {
        let msg = load_wine("/nonexistent/wine.csv", 0).unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/wine.csv"));
    }

    #[test]
    fn tape_and_plain_losses_agree() {
        let d = parse_wine(SAMPLE, "s", 4).unwrap();
        let p = WineRegression::new(&d).unwrap();
        let mut rng = Rng::seed_from(9);
        let pop = p.domain().sample(2, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(pop.clone(), 2, p.dim()).unwrap();
        let f = p.eval_rows(&mut tape, x).unwrap();
        for i in 0..2 {
            let plain = p.eval_point(&pop[i * p.dim()..(i + 1) * p.dim()]);
            assert!((plain - tape.value(f)[i]).abs() < 1e-9 * plain.abs());
        }
    }
}
