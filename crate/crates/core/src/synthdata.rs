//! Synthetic paired datasets with planted cross-view structure.
//!
//! Each pair shares a latent vector z drawn around its category's mean;
//! the two views are linear images `x = A·z + σ·ε`, `y = B·z + σ·ε`.
//! Because the construction is fully Gaussian, the population canonical
//! correlations have a closed form, which generation stores alongside the
//! data as the oracle for recovery tests.
//!
//! The reduction behind the oracle: with Σ = Cov(z), G = Σ^{1/2}AᵀAΣ^{1/2}
//! and H = Σ^{1/2}BᵀBΣ^{1/2}, the push-through identity collapses
//! Aᵀ(AΣAᵀ+σ²I)⁻¹A to an L×L problem, giving P = G(G+σ²I)⁻¹ and
//! Q = H(H+σ²I)⁻¹; the squared canonical correlations are the eigenvalues
//! of P^{1/2}·Q·P^{1/2}.
//!
//! Nonlinear mode warps the audio view with a fixed elementwise cube and
//! a seeded rotation. A cube costs a linear map most of its correlation
//! (for t standard normal, corr(t, t³) = 3/√15 ≈ 0.775), so linear CCA is
//! provably suboptimal there while a smooth invertible map can undo it.
//! The stored correlations always describe the underlying linear views.

use crate::error::{Error, Result};
use crate::linalg::{inv_spd, sqrt_spd, sym_eig, Matrix};
use crate::rngutil::{normal, rng_from_seed};

/// Spread of the category means in latent space.
const CATEGORY_SPREAD: f64 = 1.0;

/// Generation parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_pairs: usize,
    pub latent_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    /// Per-coordinate observation noise scale σ.
    pub noise: f64,
    /// Warp the audio view with the fixed cube-and-rotate map.
    pub nonlinear: bool,
    pub n_categories: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_pairs: 400,
            latent_dim: 3,
            audio_dim: 20,
            text_dim: 300,
            noise: 0.1,
            nonlinear: false,
            n_categories: 20,
            seed: 0,
        }
    }
}

/// What generation actually planted; the oracle side of recovery tests.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Audio mixing matrix A (audio_dim × latent_dim).
    pub mix_audio: Matrix,
    /// Text mixing matrix B (text_dim × latent_dim).
    pub mix_text: Matrix,
    pub noise: f64,
    /// Population canonical correlations of the linear views, descending.
    pub population_correlations: Vec<f64>,
}

/// A generated dataset: views are features×pairs, index-aligned.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub ids: Vec<String>,
    pub audio: Matrix,
    pub text: Matrix,
    pub categories: Vec<usize>,
    pub truth: GroundTruth,
}

/// Generates a dataset; a pure function of the spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    validate(spec)?;
    let l = spec.latent_dim;
    let (dx, dy) = (spec.audio_dim, spec.text_dim);
    let k = spec.n_categories;
    let mut rng = rng_from_seed(spec.seed);

    // Draw order is part of the format: category means, A, B, then per
    // item z, ε_audio, ε_text, then (nonlinear only) the rotation.
    let cat_means = Matrix::from_fn(k, l, |_, _| CATEGORY_SPREAD * normal(&mut rng));
    let a = Matrix::from_fn(dx, l, |_, _| normal(&mut rng));
    let b = Matrix::from_fn(dy, l, |_, _| normal(&mut rng));

    let n = spec.n_pairs;
    let mut audio = Matrix::zeros(dx, n);
    let mut text = Matrix::zeros(dy, n);
    let mut categories = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let mut z = vec![0.0; l];
    for i in 0..n {
        let c = i % k;
        categories.push(c);
        ids.push(format!("item-{i:05}"));
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = cat_means[(c, j)] + normal(&mut rng);
        }
        for r in 0..dx {
            let mut v = spec.noise * normal(&mut rng);
            for (j, zj) in z.iter().enumerate() {
                v += a[(r, j)] * zj;
            }
            audio[(r, i)] = v;
        }
        for r in 0..dy {
            let mut v = spec.noise * normal(&mut rng);
            for (j, zj) in z.iter().enumerate() {
                v += b[(r, j)] * zj;
            }
            text[(r, i)] = v;
        }
    }

    let latent_cov = latent_covariance(&cat_means);
    if spec.nonlinear {
        warp_audio(&mut audio, &a, &cat_means, &latent_cov, spec.noise, &mut rng);
    }

    let population_correlations = population_correlations(&a, &b, &latent_cov, spec.noise)?;
    Ok(SynthDataset {
        ids,
        audio,
        text,
        categories,
        truth: GroundTruth {
            mix_audio: a,
            mix_text: b,
            noise: spec.noise,
            population_correlations,
        },
    })
}

fn validate(spec: &SynthSpec) -> Result<()> {
    if spec.n_pairs == 0 {
        return Err(Error::Config("n_pairs must be positive".into()));
    }
    if spec.latent_dim == 0 || spec.latent_dim > spec.audio_dim.min(spec.text_dim) {
        return Err(Error::Config(format!(
            "latent dim {} must lie in 1..=min(audio {}, text {})",
            spec.latent_dim, spec.audio_dim, spec.text_dim
        )));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(Error::Config(format!("noise {} must be ≥ 0", spec.noise)));
    }
    if spec.n_categories == 0 {
        return Err(Error::Config("n_categories must be positive".into()));
    }
    Ok(())
}

/// Cov(z) for z = μ_C + w: identity plus the between-category scatter.
fn latent_covariance(cat_means: &Matrix) -> Matrix {
    let (k, l) = cat_means.shape();
    let mut mean = vec![0.0; l];
    for c in 0..k {
        for j in 0..l {
            mean[j] += cat_means[(c, j)] / k as f64;
        }
    }
    Matrix::from_fn(l, l, |p, q| {
        let mut s = if p == q { 1.0 } else { 0.0 };
        for c in 0..k {
            s += (cat_means[(c, p)] - mean[p]) * (cat_means[(c, q)] - mean[q]) / k as f64;
        }
        s
    })
}

/// Population canonical correlations of the linear model, via the L×L
/// reduced problem described in the module docs.
fn population_correlations(
    a: &Matrix,
    b: &Matrix,
    latent_cov: &Matrix,
    noise: f64,
) -> Result<Vec<f64>> {
    let s_half = sqrt_spd(latent_cov, "latent covariance")?;
    let reduced = |m: &Matrix| -> Result<Matrix> {
        let u = m.matmul(&s_half)?; // d×L
        let g = u.matmul_tn(&u)?.symmetrized(); // L×L
        let mut shifted = g.clone();
        shifted.add_diag_mut(noise * noise);
        Ok(g.matmul(&inv_spd(&shifted, "reduced gram")?)?.symmetrized())
    };
    let p = reduced(a)?;
    let q = reduced(b)?;
    let p_half = sqrt_spd(&p, "reduced audio operator")?;
    let core = p_half.matmul(&q)?.matmul(&p_half)?.symmetrized();
    let eig = sym_eig(&core)?;
    Ok(eig
        .values
        .iter()
        .map(|&v| v.clamp(0.0, 1.0).sqrt())
        .collect())
}

/// Fixed nonlinearity on the audio view: center and scale each coordinate
/// by its population statistics, cube, then rotate by a seeded orthogonal
/// matrix.
fn warp_audio(
    audio: &mut Matrix,
    a: &Matrix,
    cat_means: &Matrix,
    latent_cov: &Matrix,
    noise: f64,
    rng: &mut crate::rngutil::SeededRng,
) {
    let (dx, n) = audio.shape();
    let (k, l) = cat_means.shape();

    // Population mean A·μ̄ and per-coordinate std of x.
    let mut mu = vec![0.0; l];
    for c in 0..k {
        for j in 0..l {
            mu[j] += cat_means[(c, j)] / k as f64;
        }
    }
    let mut mean_x = vec![0.0; dx];
    let mut std_x = vec![0.0; dx];
    for r in 0..dx {
        for j in 0..l {
            mean_x[r] += a[(r, j)] * mu[j];
        }
        let mut var = noise * noise;
        for p in 0..l {
            for q in 0..l {
                var += a[(r, p)] * latent_cov[(p, q)] * a[(r, q)];
            }
        }
        std_x[r] = var.sqrt().max(1e-12);
    }

    for r in 0..dx {
        for i in 0..n {
            let t = (audio[(r, i)] - mean_x[r]) / std_x[r];
            audio[(r, i)] = t * t * t;
        }
    }

    let rot = random_rotation(dx, rng);
    *audio = rot.matmul(audio).expect("square rotation");
}

/// Orthogonal matrix from Gram-Schmidt on a seeded Gaussian draw.
fn random_rotation(d: usize, rng: &mut crate::rngutil::SeededRng) -> Matrix {
    let raw = Matrix::from_fn(d, d, |_, _| normal(rng));
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut c = raw.col(j);
        // Two passes keep the basis orthogonal even for large d.
        for _ in 0..2 {
            for prev in &cols {
                let proj: f64 = c.iter().zip(prev).map(|(x, y)| x * y).sum();
                for (ci, pv) in c.iter_mut().zip(prev) {
                    *ci -= proj * pv;
                }
            }
        }
        let norm: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut c {
            *v /= norm;
        }
        cols.push(c);
    }
    let mut q = Matrix::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        q.set_col(j, c);
    }
    q
}
