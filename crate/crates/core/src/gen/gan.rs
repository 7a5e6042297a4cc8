//! Conditional Wasserstein GAN with weight clipping. DP-SGD runs on the
//! discriminator only; the generator never touches real data directly, so
//! it is private by post-processing.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContinuousTransform, LabeledTable};
use crate::error::{Error, Result};
use crate::gen::{sample_categorical, with_onehot};
use crate::nn::{dp_sgd_step, Activation, DpSgdConfig, Gradients, Mlp};
use crate::privacy::{calibrate_noise_multiplier, rdp_subsampled_gaussian, AccountantState, PrivacySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwganConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// Discriminator updates per generator update.
    pub n_critic: usize,
    /// Lipschitz weight clipping bound for the discriminator.
    pub weight_clip: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub disc_learning_rate: f64,
    pub gen_learning_rate: f64,
    /// Total discriminator steps; only these consume privacy budget.
    pub steps: usize,
}

impl Default for CwganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: vec![256, 256],
            n_critic: 5,
            weight_clip: 0.01,
            clip_norm: 1.0,
            batch_size: 32,
            disc_learning_rate: 0.05,
            gen_learning_rate: 0.05,
            steps: 2000,
        }
    }
}

/// Generator maps `z ++ onehot(y)` to feature space; the critic maps
/// `x ++ onehot(y)` to a scalar score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwganModel {
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
    pub weight_clip: f64,
}

impl CwganModel {
    pub fn n_classes(&self) -> usize {
        self.generator.in_dim() - self.latent_dim
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CwganArtifact {
    pub model: CwganModel,
    pub transform: ContinuousTransform,
    pub class_probs: Vec<f64>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanTrainReport {
    /// Critic gap `mean D(real) - mean D(fake)` before each critic update.
    pub gap_history: Vec<f64>,
    pub noise_multiplier: f64,
    pub epsilon_consumed: f64,
    pub accountant: Option<AccountantState>,
}

/// Alternating training: `n_critic` DP-SGD critic steps (ascending the
/// Wasserstein gap, weights clipped to `[-c, c]` after every update), then
/// one plain-SGD generator step on `-mean D(G(z, y), y)`. The accountant
/// counts critic steps only.
pub fn train<R: Rng + ?Sized>(
    train_table: &LabeledTable,
    config: &CwganConfig,
    privacy: &PrivacySpec,
    rng: &mut R,
) -> Result<(CwganArtifact, GanTrainReport)> {
    let n = train_table.n_rows();
    let d = train_table.n_features();
    let n_classes = train_table.n_classes();
    let batch = config.batch_size.min(n);
    let q = batch as f64 / n as f64;

    let (noise_multiplier, clip_norm) = if privacy.is_private() {
        let nm = calibrate_noise_multiplier(q, config.steps as u64, privacy.epsilon, privacy.delta)?;
        (nm, config.clip_norm)
    } else {
        (0.0, f64::INFINITY)
    };
    let dp = DpSgdConfig {
        clip_norm,
        noise_multiplier,
        batch_size: batch,
        learning_rate: config.disc_learning_rate,
        steps: config.steps,
    };
    dp.validate()?;

    let transform = ContinuousTransform::fit(train_table)?;
    let standardized = transform.apply(train_table);
    let x = standardized.features();
    let class_probs = train_table.class_frequencies();

    let mut gen_dims = vec![config.latent_dim + n_classes];
    gen_dims.extend(&config.hidden);
    gen_dims.push(d);
    let mut disc_dims = vec![d + n_classes];
    disc_dims.extend(&config.hidden);
    disc_dims.push(1);
    let mut acts = vec![Activation::Relu; config.hidden.len()];
    acts.push(Activation::Identity);

    let mut model = CwganModel {
        generator: Mlp::new(&gen_dims, &acts, rng),
        discriminator: Mlp::new(&disc_dims, &acts, rng),
        latent_dim: config.latent_dim,
        weight_clip: config.weight_clip,
    };
    model.discriminator.clip_weights(config.weight_clip);

    let mut gap_history = Vec::with_capacity(config.steps);
    let mut disc_steps = 0usize;

    while disc_steps < config.steps {
        for _ in 0..config.n_critic {
            if disc_steps == config.steps {
                break;
            }
            let gap = critic_step(&mut model, x, standardized.labels(), &class_probs, &dp, rng)?;
            if !gap.is_finite() {
                return Err(Error::NonFiniteLoss { step: disc_steps, value: gap });
            }
            gap_history.push(gap);
            disc_steps += 1;
        }
        generator_step(&mut model, &class_probs, batch, config.gen_learning_rate, rng);
    }

    let (accountant, epsilon_consumed) = if privacy.is_private() {
        let state = rdp_subsampled_gaussian(q, noise_multiplier, config.steps as u64)?;
        let (eps, _) = state.to_epsilon(privacy.delta)?;
        (Some(state), eps)
    } else {
        (None, 0.0)
    };

    Ok((
        CwganArtifact {
            model,
            transform,
            class_probs,
            feature_names: train_table.feature_names().to_vec(),
            class_names: train_table.class_names().to_vec(),
        },
        GanTrainReport { gap_history, noise_multiplier, epsilon_consumed, accountant },
    ))
}

/// One critic update. Each real example is paired with one generated
/// example; the per-example loss `-(D(x, y) - D(x_fake, y_fake))` keeps the
/// contribution of a single training record inside the clipping bound.
/// Returns the pre-update gap estimate.
fn critic_step<R: Rng + ?Sized>(
    model: &mut CwganModel,
    x: &Array2<f64>,
    labels: &[usize],
    class_probs: &[f64],
    dp: &DpSgdConfig,
    rng: &mut R,
) -> Result<f64> {
    let n = x.nrows();
    let n_classes = class_probs.len();
    let rows = rand::seq::index::sample(rng, n, dp.batch_size);

    let mut per_example = Vec::with_capacity(dp.batch_size);
    let mut gap = 0.0;
    for row in rows {
        let real_in = with_onehot(&x.row(row).to_vec(), labels[row], n_classes);
        let real_cache = model.discriminator.forward_cached(&real_in);
        let d_real = real_cache.output()[0];

        let y_fake = sample_categorical(class_probs, rng);
        let z: Vec<f64> =
            (0..model.latent_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fake = model.generator.forward(&with_onehot(&z, y_fake, n_classes))?;
        let fake_in = with_onehot(fake.as_slice().unwrap(), y_fake, n_classes);
        let fake_cache = model.discriminator.forward_cached(&fake_in);
        let d_fake = fake_cache.output()[0];

        gap += d_real - d_fake;

        // descend -(D(real) - D(fake))
        let (mut grads, _) =
            model.discriminator.backward(&real_cache, &Array1::from(vec![-1.0]));
        let (fake_grads, _) =
            model.discriminator.backward(&fake_cache, &Array1::from(vec![1.0]));
        grads.add(&fake_grads);
        per_example.push(vec![grads]);
    }

    dp_sgd_step(&mut [&mut model.discriminator], &per_example, dp, rng);
    model.discriminator.clip_weights(model.weight_clip);
    Ok(gap / dp.batch_size as f64)
}

/// One plain-SGD generator update on `-mean D(G(z, y), y)`. Gradients reach
/// the generator only through the critic's score of generated samples.
fn generator_step<R: Rng + ?Sized>(
    model: &mut CwganModel,
    class_probs: &[f64],
    batch: usize,
    learning_rate: f64,
    rng: &mut R,
) {
    let n_classes = class_probs.len();
    let d = model.discriminator.in_dim() - n_classes;
    let mut total = Gradients::zeros_like(&model.generator);
    for _ in 0..batch {
        let y = sample_categorical(class_probs, rng);
        let z: Vec<f64> =
            (0..model.latent_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let gen_cache = model.generator.forward_cached(&with_onehot(&z, y, n_classes));
        let fake = gen_cache.output();
        let disc_in = with_onehot(fake.as_slice().unwrap(), y, n_classes);
        let disc_cache = model.discriminator.forward_cached(&disc_in);
        let (_, d_disc_in) = model.discriminator.backward(&disc_cache, &Array1::from(vec![-1.0]));
        let d_fake = d_disc_in.slice(ndarray::s![..d]).to_owned();
        let (gen_grads, _) = model.generator.backward(&gen_cache, &d_fake);
        total.add(&gen_grads);
    }
    total.scale(1.0 / batch as f64);
    model.generator.apply_gradients(&total, learning_rate);
}

impl CwganArtifact {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        let d = self.feature_names.len();
        let n_classes = self.class_names.len();
        let mut features = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = sample_categorical(&self.class_probs, rng);
            let z: Vec<f64> =
                (0..self.model.latent_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x_hat = self.model.generator.forward(&with_onehot(&z, y, n_classes))?;
            features.row_mut(i).assign(&x_hat);
            labels.push(y);
        }
        let standardized =
            LabeledTable::new(features, labels, self.feature_names.clone(), self.class_names.clone())?;
        Ok(self.transform.invert(&standardized))
    }
}
