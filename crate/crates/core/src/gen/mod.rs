//! The five synthetic-data generators behind one tagged union, plus
//! versioned model (de)serialization.

pub mod gan;
pub mod pgm;
pub mod privsyn;
pub mod rongauss;
pub mod vae;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledTable;
use crate::error::{Error, Result};

/// Which generator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    RonGauss,
    Vae,
    Gan,
    Pgm,
    PrivSyn,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [
        GeneratorKind::RonGauss,
        GeneratorKind::Vae,
        GeneratorKind::Gan,
        GeneratorKind::Pgm,
        GeneratorKind::PrivSyn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::RonGauss => "rongauss",
            GeneratorKind::Vae => "vae",
            GeneratorKind::Gan => "gan",
            GeneratorKind::Pgm => "pgm",
            GeneratorKind::PrivSyn => "privsyn",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rongauss" => Ok(GeneratorKind::RonGauss),
            "vae" => Ok(GeneratorKind::Vae),
            "gan" => Ok(GeneratorKind::Gan),
            "pgm" => Ok(GeneratorKind::Pgm),
            "privsyn" => Ok(GeneratorKind::PrivSyn),
            other => Err(Error::InvalidParams(format!("unknown generator '{other}'"))),
        }
    }
}

/// A fitted generator. Every variant samples labeled tables in the original
/// data units (post-processing transforms are part of the artifact).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GeneratorModel {
    RonGauss(rongauss::RonGaussModel),
    Vae(vae::CvaeArtifact),
    Gan(gan::CwganArtifact),
    Pgm(pgm::PgmArtifact),
    PrivSyn(privsyn::PrivSynArtifact),
}

impl GeneratorModel {
    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorModel::RonGauss(_) => GeneratorKind::RonGauss,
            GeneratorModel::Vae(_) => GeneratorKind::Vae,
            GeneratorModel::Gan(_) => GeneratorKind::Gan,
            GeneratorModel::Pgm(_) => GeneratorKind::Pgm,
            GeneratorModel::PrivSyn(_) => GeneratorKind::PrivSyn,
        }
    }

    /// Draw `n` synthetic rows. Sampling reads only the fitted model, never
    /// the training data (post-processing preserves the privacy guarantee).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        match self {
            GeneratorModel::RonGauss(m) => m.sample(n, rng),
            GeneratorModel::Vae(m) => m.sample(n, rng),
            GeneratorModel::Gan(m) => m.sample(n, rng),
            GeneratorModel::Pgm(m) => m.sample(n, rng),
            GeneratorModel::PrivSyn(m) => m.sample(n, rng),
        }
    }
}

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: GeneratorModel,
}

/// Write a fitted model as a versioned JSON artifact.
pub fn save_model<P: AsRef<Path>>(model: &GeneratorModel, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer(
        std::io::BufWriter::new(file),
        &ModelFile { version: MODEL_FILE_VERSION, model: model.clone() },
    )?;
    Ok(())
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<GeneratorModel> {
    let file = std::fs::File::open(path)?;
    let parsed: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
    if parsed.version != MODEL_FILE_VERSION {
        return Err(Error::InvalidParams(format!(
            "model file version {} not supported (expected {MODEL_FILE_VERSION})",
            parsed.version
        )));
    }
    Ok(parsed.model)
}

/// Sample a class index from a probability vector.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `x ++ onehot(y)` input layout shared by the conditional networks.
pub(crate) fn with_onehot(x: &[f64], y: usize, n_classes: usize) -> ndarray::Array1<f64> {
    let mut out = ndarray::Array1::zeros(x.len() + n_classes);
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v;
    }
    out[x.len() + y] = 1.0;
    out
}
