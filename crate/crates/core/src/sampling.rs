//! Sampling schemes for the latent space: diagonal Gaussian (elliptic
//! clusters), generalized Normal (rectangular clusters at high shape
//! parameter), and Dirichlet weights mapped onto an affine convex polygon
//! (polygonal clusters). Each scheme pairs with its natural prior:
//! N(0, I), GN(0, 1, omega), Dir(1, ..., 1).
//!
//! Two levels live here. Plain-value functions operate on single points
//! and carry the definitional contracts. Graph builders assemble the same
//! math over whole batches inside a [`Graph`] so gradients flow to the
//! distribution-parameter heads.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

/// How gradients reach the Dirichlet concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirichletGradientPath {
    /// Differentiate the per-coordinate gamma quantile implicitly
    /// (pathwise, low variance). The default.
    #[default]
    ImplicitReparam,
    /// REINFORCE-style surrogate on the KL term, for cross-checking. The
    /// sampled weights are constants here, so the reconstruction path
    /// contributes no gradient to the concentrations.
    ScoreFunction,
}

/// Latent distribution choice plus its matched prior.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingScheme {
    /// z ~ N(mu, diag(sigma^2)); prior N(0, I); elliptic clusters.
    Gaussian,
    /// z ~ GN(mu, alpha, omega) per axis; prior GN(0, 1, omega);
    /// rectangular clusters as omega grows.
    GeneralizedNormal { omega: f64 },
    /// w ~ Dir(alpha), z = affine(V w); prior Dir(1, ..., 1); clusters fill
    /// affine images of the base polygon.
    DirichletPolygon {
        /// 2 x v matrix of base-polygon vertices, counterclockwise.
        vertices: Tensor,
        /// When false the translation component is pinned to zero.
        translation: bool,
        gradient_path: DirichletGradientPath,
    },
}

impl SamplingScheme {
    pub fn polygon_vertex_count(&self) -> Option<usize> {
        match self {
            SamplingScheme::DirichletPolygon { vertices, .. } => Some(vertices.shape()[1]),
            _ => None,
        }
    }
}

/// Vertices of the regular v-gon with unit circumradius, counterclockwise
/// starting from the top, as a 2 x v matrix.
pub fn regular_polygon(v: usize) -> Result<Tensor> {
    if v < 3 {
        return Err(Error::invalid(format!(
            "a polygon needs at least 3 vertices, got {v}"
        )));
    }
    let mut data = vec![0.0; 2 * v];
    for k in 0..v {
        let theta = std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / v as f64;
        data[k] = theta.cos();
        data[v + k] = theta.sin();
    }
    Tensor::matrix(2, v, data)
}

// ---------------------------------------------------------------------------
// Plain-value distribution parameters and operations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DiagGaussianParams {
    pub mu: [f64; 2],
    pub log_sigma: [f64; 2],
}

impl DiagGaussianParams {
    pub fn sigma(&self) -> [f64; 2] {
        [self.log_sigma[0].exp(), self.log_sigma[1].exp()]
    }
}

#[derive(Debug, Clone)]
pub struct GenNormalParams {
    pub mu: [f64; 2],
    pub log_alpha: [f64; 2],
    /// Shape hyperparameter, fixed across training.
    pub omega: f64,
}

impl GenNormalParams {
    pub fn alpha(&self) -> [f64; 2] {
        [self.log_alpha[0].exp(), self.log_alpha[1].exp()]
    }
}

#[derive(Debug, Clone)]
pub struct DirichletPolygonParams {
    pub log_alpha: Vec<f64>,
    pub phi: f64,
    pub log_sx: f64,
    pub log_sy: f64,
    pub tx: f64,
    pub ty: f64,
    /// 2 x v base polygon, counterclockwise convex.
    pub vertices: Tensor,
}

/// z = mu + sigma ⊙ noise.
pub fn sample_gaussian(p: &DiagGaussianParams, noise: [f64; 2]) -> [f64; 2] {
    let s = p.sigma();
    [p.mu[0] + s[0] * noise[0], p.mu[1] + s[1] * noise[1]]
}

/// Closed-form KL(N(mu, diag(sigma^2)) || N(0, I)).
pub fn kl_gaussian_analytic(p: &DiagGaussianParams) -> f64 {
    let s = p.sigma();
    (0..2)
        .map(|d| 0.5 * (s[d] * s[d] + p.mu[d] * p.mu[d] - 1.0 - 2.0 * p.log_sigma[d]))
        .sum()
}

/// log density of the generalized Normal:
/// log[omega / (2 alpha Γ(1/omega))] − (|x−mu|/alpha)^omega.
pub fn logpdf_gennormal(x: f64, mu: f64, alpha: f64, omega: f64) -> f64 {
    omega.ln() - (2.0 * alpha).ln() - ln_gamma(1.0 / omega) - ((x - mu).abs() / alpha).powf(omega)
}

/// z = mu + alpha ⊙ noise, noise drawn from the standard GN(0, 1, omega).
pub fn sample_gennormal(p: &GenNormalParams, noise: [f64; 2]) -> [f64; 2] {
    let a = p.alpha();
    [p.mu[0] + a[0] * noise[0], p.mu[1] + a[1] * noise[1]]
}

/// One standard GN(0, 1, omega) draw: sign · G^(1/omega), G ~ Gamma(1/omega, 1).
pub fn standard_gennormal(omega: f64, rng: &mut impl Rng) -> f64 {
    let gamma = Gamma::new(1.0 / omega, 1.0).expect("positive shape");
    let g: f64 = gamma.sample(rng);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    sign * g.powf(1.0 / omega)
}

/// Dirichlet draw by gamma normalization: w_i = G_i / Σ G_j, G_i ~ Gamma(alpha_i, 1).
pub fn sample_dirichlet(alphas: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::invalid(format!(
            "Dirichlet concentrations must be positive, got {alphas:?}"
        )));
    }
    let mut gs: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
            // guard against exact-zero draws at tiny concentrations
            g.max(1e-300)
        })
        .collect();
    let total: f64 = gs.iter().sum();
    for g in &mut gs {
        *g /= total;
    }
    Ok(gs)
}

/// z = R(phi) · diag(s) · V · w + t.
pub fn polygon_map(w: &[f64], p: &DirichletPolygonParams) -> Result<[f64; 2]> {
    let v = p.vertices.shape()[1];
    if w.len() != v {
        return Err(Error::ShapeMismatch {
            op: "polygon_map",
            left: vec![w.len()],
            right: vec![v],
        });
    }
    let mut px = 0.0;
    let mut py = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        px += p.vertices.at2(0, k) * wk;
        py += p.vertices.at2(1, k) * wk;
    }
    px *= p.log_sx.exp();
    py *= p.log_sy.exp();
    let (sin, cos) = p.phi.sin_cos();
    Ok([cos * px - sin * py + p.tx, sin * px + cos * py + p.ty])
}

/// Monte-Carlo KL estimate: mean of (log q − log p) over samples drawn
/// from q.
pub fn kl_sampled(log_q_of_samples: &[f64], log_p_of_samples: &[f64]) -> Result<f64> {
    if log_q_of_samples.len() != log_p_of_samples.len() {
        return Err(Error::ShapeMismatch {
            op: "kl_sampled",
            left: vec![log_q_of_samples.len()],
            right: vec![log_p_of_samples.len()],
        });
    }
    if log_q_of_samples.is_empty() {
        return Err(Error::invalid("kl_sampled needs at least one sample"));
    }
    let m = log_q_of_samples.len() as f64;
    Ok(log_q_of_samples
        .iter()
        .zip(log_p_of_samples)
        .map(|(q, p)| q - p)
        .sum::<f64>()
        / m)
}

// ---------------------------------------------------------------------------
// Noise helpers (drawn outside the graph; constants during backward)
// ---------------------------------------------------------------------------

pub fn standard_normal_noise(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            x
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

pub fn standard_gennormal_noise(
    rng: &mut impl Rng,
    omega: f64,
    rows: usize,
    cols: usize,
) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| standard_gennormal(omega, rng))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Uniforms in the open interval, clamped away from 0 and 1 so gamma
/// quantiles stay finite.
pub fn open_uniform_noise(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

// ---------------------------------------------------------------------------
// Graph builders: batched sampling layers with per-point KL
// ---------------------------------------------------------------------------

/// Batched Gaussian layer. `mu` and `log_sigma` are [m, 2] nodes; `noise`
/// is a constant [m, 2] standard-normal tensor. Returns (z [m, 2],
/// kl [m, 1]) with the analytic KL.
pub fn gaussian_layer(
    g: &mut Graph,
    mu: NodeId,
    log_sigma: NodeId,
    noise: &Tensor,
) -> Result<(NodeId, NodeId)> {
    let sigma = g.exp(log_sigma);
    let n = g.leaf(noise.clone());
    let scaled = g.mul(sigma, n)?;
    let z = g.add(mu, scaled)?;

    // 0.5 Σ_d (sigma^2 + mu^2 − 1 − 2 log_sigma)
    let sigma2 = g.mul(sigma, sigma)?;
    let mu2 = g.mul(mu, mu)?;
    let two_ls = g.scale(log_sigma, 2.0);
    let sum = g.add(sigma2, mu2)?;
    let sum = g.sub(sum, two_ls)?;
    let sum = g.add_scalar(sum, -1.0);
    let row = g.row_sum(sum)?;
    let kl = g.scale(row, 0.5);
    Ok((z, kl))
}

/// Batched generalized-Normal layer with the sample-based KL against the
/// standard GN(0, 1, omega) prior. `noise` is a constant [m, 2] tensor of
/// standard GN draws.
pub fn gennormal_layer(
    g: &mut Graph,
    mu: NodeId,
    log_alpha: NodeId,
    omega: f64,
    noise: &Tensor,
) -> Result<(NodeId, NodeId)> {
    let alpha = g.exp(log_alpha);
    let n = g.leaf(noise.clone());
    let scaled = g.mul(alpha, n)?;
    let z = g.add(mu, scaled)?;

    // log q(z) − log p(z) per dimension:
    //   [−log alpha − (|z−mu|/alpha)^omega] − [−(|z|)^omega]
    // the shared normalizer log[omega/(2Γ(1/omega))] cancels.
    let diff = g.sub(z, mu)?;
    let adiff = g.abs(diff);
    let ratio = g.div(adiff, alpha)?;
    let qterm = g.powf(ratio, omega);
    let az = g.abs(z);
    let pterm = g.powf(az, omega);
    let d = g.sub(pterm, qterm)?;
    let d = g.sub(d, log_alpha)?;
    let kl = g.row_sum(d)?;
    Ok((z, kl))
}

/// Per-point affine heads for the polygon scheme, each an [m, 1] node.
pub struct PolygonHeads {
    pub phi: NodeId,
    pub log_sx: NodeId,
    pub log_sy: NodeId,
    /// None when the scheme disables translation.
    pub t: Option<(NodeId, NodeId)>,
}

/// Batched Dirichlet-polygon layer. `log_alpha` is [m, v]; `uniforms` is a
/// constant [m, v] tensor of open-interval uniforms (implicit-reparam path)
/// or ignored in favor of `rng_samples` for the score-function path.
/// Returns (z [m, 2], kl [m, 1]); the KL is measured on the simplex
/// weights against Dir(1, ..., 1), before the affine map.
pub fn dirichlet_polygon_layer(
    g: &mut Graph,
    log_alpha: NodeId,
    heads: &PolygonHeads,
    vertices: &Tensor,
    uniforms: &Tensor,
    path: DirichletGradientPath,
) -> Result<(NodeId, NodeId)> {
    let v = vertices.shape()[1];
    let alpha = g.exp(log_alpha);
    if g.value(alpha).shape() != [uniforms.shape()[0], v] {
        return Err(Error::ShapeMismatch {
            op: "dirichlet_polygon_layer",
            left: g.value(alpha).shape().to_vec(),
            right: vec![uniforms.shape()[0], v],
        });
    }

    let (w, kl) = match path {
        DirichletGradientPath::ImplicitReparam => {
            let gamma = g.gamma_quantile_of(alpha, uniforms)?;
            let total = g.row_sum(gamma)?;
            let w = g.div(gamma, total)?;
            let kl = dirichlet_log_q(g, alpha, w, v)?;
            (w, kl)
        }
        DirichletGradientPath::ScoreFunction => {
            // Sample outside the graph (same gamma quantiles, so a shared
            // seed matches the pathwise variant), then build a REINFORCE
            // surrogate: f + stop(f − b) · log q, whose gradient in alpha
            // estimates ∇ E[f] with f = log q − log p. The baseline b is
            // the batch mean of f, which leaves the expectation unchanged
            // (up to an O(1/m) scale from self-inclusion) while taming the
            // heavy-tailed raw estimator. Needs batch size > 1.
            let alpha_val = g.value(alpha).clone();
            let mut gdata = Vec::with_capacity(alpha_val.len());
            for (&a, &u) in alpha_val.data().iter().zip(uniforms.data()) {
                gdata.push(crate::special::gamma_quantile(a, u)?);
            }
            let gt = Tensor::new(alpha_val.shape().to_vec(), gdata)?;
            let gamma = g.leaf(gt);
            let total = g.row_sum(gamma)?;
            let w = g.div(gamma, total)?;
            let f = dirichlet_log_q(g, alpha, w, v)?;
            let f_const = g.detach(f);
            let baseline = g.mean_all(f_const);
            let centered = g.sub(f_const, baseline)?;
            let log_q = dirichlet_log_q_raw(g, alpha, w)?;
            let score = g.mul(centered, log_q)?;
            let score_grad_only = {
                let s = g.detach(score);
                g.sub(score, s)?
            };
            // surrogate value equals f; its gradient adds the score term.
            let kl = g.add(f, score_grad_only)?;
            (w, kl)
        }
    };

    // p = w · Vᵀ, then rotate/scale/translate per point.
    let vt = g.leaf(vertices.transpose()?);
    let p = g.matmul(w, vt)?;
    let px = g.slice_cols(p, 0, 1)?;
    let py = g.slice_cols(p, 1, 2)?;
    let sx = g.exp(heads.log_sx);
    let sy = g.exp(heads.log_sy);
    let sxpx = g.mul(sx, px)?;
    let sypy = g.mul(sy, py)?;
    let cphi = g.cos(heads.phi);
    let sphi = g.sin(heads.phi);
    let xe = {
        let a = g.mul(cphi, sxpx)?;
        let b = g.mul(sphi, sypy)?;
        g.sub(a, b)?
    };
    let ye = {
        let a = g.mul(sphi, sxpx)?;
        let b = g.mul(cphi, sypy)?;
        g.add(a, b)?
    };
    let (zx, zy) = match heads.t {
        Some((tx, ty)) => (g.add(xe, tx)?, g.add(ye, ty)?),
        None => (xe, ye),
    };
    let z = g.concat_cols(&[zx, zy])?;
    Ok((z, kl))
}

/// log q(w; alpha) − log Dir(w; 1,...,1) per point: the Dir(1) prior is the
/// constant lnΓ(v) on the simplex.
fn dirichlet_log_q(g: &mut Graph, alpha: NodeId, w: NodeId, v: usize) -> Result<NodeId> {
    let log_q = dirichlet_log_q_raw(g, alpha, w)?;
    Ok(g.add_scalar(log_q, -ln_gamma(v as f64)))
}

/// log Dirichlet density: lnΓ(Σα) − Σ lnΓ(α_i) + Σ (α_i − 1) ln w_i, per row.
fn dirichlet_log_q_raw(g: &mut Graph, alpha: NodeId, w: NodeId) -> Result<NodeId> {
    let a0 = g.row_sum(alpha)?;
    let lg_a0 = g.ln_gamma(a0);
    let lg_ai = g.ln_gamma(alpha);
    let sum_lg = g.row_sum(lg_ai)?;
    let ln_w = g.log(w);
    let am1 = g.add_scalar(alpha, -1.0);
    let prod = g.mul(am1, ln_w)?;
    let sum_prod = g.row_sum(prod)?;
    let t = g.sub(lg_a0, sum_lg)?;
    g.add(t, sum_prod)
}
