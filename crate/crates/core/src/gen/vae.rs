//! Conditional VAE with Gaussian prior and reparameterization, trained with
//! DP-SGD on encoder and decoder jointly.
//!
//! Loss per example: `recon_weight * MSE(x_hat, x) + KL(N(mu, diag e^lv) || N(0, I))`
//! with the closed-form KL `0.5 * sum(mu^2 + e^lv - 1 - lv)` and
//! `z = mu + e^{lv/2} * eta`, `eta ~ N(0, I)`. The log-variance head is
//! clamped to [-15, 15] so DP noise cannot push the loss non-finite.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContinuousTransform, LabeledTable};
use crate::error::{Error, Result};
use crate::gen::{sample_categorical, with_onehot};
use crate::nn::{dp_sgd_step, Activation, DpSgdConfig, Gradients, Mlp};
use crate::privacy::{calibrate_noise_multiplier, rdp_subsampled_gaussian, AccountantState, PrivacySpec};

const LOGVAR_CLAMP: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub recon_weight: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: vec![256, 256],
            recon_weight: 10.0,
            clip_norm: 1.0,
            batch_size: 32,
            learning_rate: 0.01,
            steps: 2000,
        }
    }
}

/// Encoder/decoder pair. The encoder maps `x ++ onehot(y)` to `(mu, logvar)`
/// of the latent; the decoder maps `z ++ onehot(y)` back to feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
    pub recon_weight: f64,
}

impl CvaeModel {
    pub fn n_classes(&self) -> usize {
        self.decoder.in_dim() - self.latent_dim
    }
}

/// Fitted model plus the post-processing pieces needed to sample in
/// original units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvaeArtifact {
    pub model: CvaeModel,
    pub transform: ContinuousTransform,
    pub class_probs: Vec<f64>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VaeTrainReport {
    /// Mean total loss per step.
    pub loss_history: Vec<f64>,
    /// Mean reconstruction MSE per step.
    pub recon_history: Vec<f64>,
    pub noise_multiplier: f64,
    pub epsilon_consumed: f64,
    pub accountant: Option<AccountantState>,
}

/// Closed-form `KL(N(mu, diag e^lv) || N(0, I))`.
pub fn kl_closed_form(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

struct ExampleGrads {
    loss: f64,
    recon_mse: f64,
    encoder: Gradients,
    decoder: Gradients,
}

/// Loss and per-example gradients for one standardized row, with the
/// reparameterization noise supplied by the caller.
fn loss_and_grads(model: &CvaeModel, x: &[f64], y: usize, eta: &Array1<f64>) -> ExampleGrads {
    let latent = model.latent_dim;
    let n_classes = model.n_classes();
    let d = x.len();

    let enc_in = with_onehot(x, y, n_classes);
    let enc_cache = model.encoder.forward_cached(&enc_in);
    let enc_out = enc_cache.output();
    let mu = enc_out.slice(ndarray::s![..latent]).to_owned();
    let lv_raw = enc_out.slice(ndarray::s![latent..]).to_owned();
    let lv = lv_raw.mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP));

    let std = lv.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&std * eta);

    let dec_in = with_onehot(z.as_slice().unwrap(), y, n_classes);
    let dec_cache = model.decoder.forward_cached(&dec_in);
    let x_hat = dec_cache.output();

    let mut recon_mse = 0.0;
    for (xh, xv) in x_hat.iter().zip(x) {
        recon_mse += (xh - xv) * (xh - xv);
    }
    recon_mse /= d as f64;
    let kl = kl_closed_form(mu.as_slice().unwrap(), lv.as_slice().unwrap());
    let loss = model.recon_weight * recon_mse + kl;

    let d_xhat =
        Array1::from_iter(x_hat.iter().zip(x).map(|(xh, xv)| model.recon_weight * 2.0 / d as f64 * (xh - xv)));
    let (dec_grads, d_dec_in) = model.decoder.backward(&dec_cache, &d_xhat);
    let dz = d_dec_in.slice(ndarray::s![..latent]);

    let mut enc_upstream = Array1::zeros(2 * latent);
    for i in 0..latent {
        enc_upstream[i] = dz[i] + mu[i];
        let clamped = lv_raw[i].abs() > LOGVAR_CLAMP;
        enc_upstream[latent + i] = if clamped {
            0.0
        } else {
            dz[i] * eta[i] * 0.5 * std[i] + 0.5 * (lv[i].exp() - 1.0)
        };
    }
    let (enc_grads, _) = model.encoder.backward(&enc_cache, &enc_upstream);

    ExampleGrads { loss, recon_mse, encoder: enc_grads, decoder: dec_grads }
}

/// Train encoder and decoder jointly under DP-SGD. The noise multiplier is
/// calibrated so the accountant lands within one percent of the target
/// epsilon; non-private training runs plain mini-batch SGD.
pub fn train<R: Rng + ?Sized>(
    train_table: &LabeledTable,
    config: &CvaeConfig,
    privacy: &PrivacySpec,
    rng: &mut R,
) -> Result<(CvaeArtifact, VaeTrainReport)> {
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
        learning_rate: config.learning_rate,
        steps: config.steps,
    };
    dp.validate()?;

    let transform = ContinuousTransform::fit(train_table)?;
    let standardized = transform.apply(train_table);
    let x = standardized.features();

    let mut enc_dims = vec![d + n_classes];
    enc_dims.extend(&config.hidden);
    enc_dims.push(2 * config.latent_dim);
    let mut dec_dims = vec![config.latent_dim + n_classes];
    dec_dims.extend(&config.hidden);
    dec_dims.push(d);
    let enc_acts = activations(config.hidden.len());
    let mut model = CvaeModel {
        encoder: Mlp::new(&enc_dims, &enc_acts, rng),
        decoder: Mlp::new(&dec_dims, &enc_acts, rng),
        latent_dim: config.latent_dim,
        recon_weight: config.recon_weight,
    };

    let mut loss_history = Vec::with_capacity(config.steps);
    let mut recon_history = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let rows = rand::seq::index::sample(rng, n, batch);
        let mut per_example = Vec::with_capacity(batch);
        let mut loss_sum = 0.0;
        let mut recon_sum = 0.0;
        for row in rows {
            let eta = Array1::from_shape_fn(config.latent_dim, |_| rng.sample::<f64, _>(StandardNormal));
            let xi: Vec<f64> = x.row(row).to_vec();
            let out = loss_and_grads(&model, &xi, standardized.labels()[row], &eta);
            loss_sum += out.loss;
            recon_sum += out.recon_mse;
            per_example.push(vec![out.encoder, out.decoder]);
        }
        let mean_loss = loss_sum / batch as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, value: mean_loss });
        }
        loss_history.push(mean_loss);
        recon_history.push(recon_sum / batch as f64);

        dp_sgd_step(&mut [&mut model.encoder, &mut model.decoder], &per_example, &dp, rng);
    }

    let (accountant, epsilon_consumed) = if privacy.is_private() {
        let state = rdp_subsampled_gaussian(q, noise_multiplier, config.steps as u64)?;
        let (eps, _) = state.to_epsilon(privacy.delta)?;
        (Some(state), eps)
    } else {
        (None, 0.0)
    };

    Ok((
        CvaeArtifact {
            model,
            transform,
            class_probs: train_table.class_frequencies(),
            feature_names: train_table.feature_names().to_vec(),
            class_names: train_table.class_names().to_vec(),
        },
        VaeTrainReport { loss_history, recon_history, noise_multiplier, epsilon_consumed, accountant },
    ))
}

fn activations(hidden: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::Relu; hidden];
    acts.push(Activation::Identity);
    acts
}

impl CvaeArtifact {
    /// Labels from the public class frequencies, latents from the prior,
    /// decoded and de-standardized.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledTable> {
        let d = self.feature_names.len();
        let mut features = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = sample_categorical(&self.class_probs, rng);
            let z: Vec<f64> =
                (0..self.model.latent_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x_hat = self.decode(&z, y)?;
            features.row_mut(i).assign(&x_hat);
            labels.push(y);
        }
        let standardized =
            LabeledTable::new(features, labels, self.feature_names.clone(), self.class_names.clone())?;
        Ok(self.transform.invert(&standardized))
    }

    /// Decode one latent for a fixed label (still standardized units).
    pub fn decode(&self, z: &[f64], y: usize) -> Result<Array1<f64>> {
        let dec_in = with_onehot(z, y, self.model.n_classes());
        self.model.decoder.forward(&dec_in)
    }
}
