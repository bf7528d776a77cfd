//! Strict JSON problem configuration.
//!
//! Unknown keys are rejected everywhere — reproducibility over convenience.

use std::sync::Arc;

use evoform::forms::TimeCoeff;
use evoform::solver::SourceTerm;
use evoform::{CMatrix, CVector, Cplx, FormPath, Real, SpacePair};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub space: SpaceBlock,
    pub form: FormBlock,
    pub gamma: Real,
    pub horizon: Real,
    #[serde(default)]
    pub data: DataBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub study: Option<StudyBlock>,
}

/// Complex literal: plain real or `[re, im]`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Cx {
    Re(Real),
    Pair([Real; 2]),
}

impl Cx {
    pub fn to_complex(self) -> Cplx {
        match self {
            Cx::Re(re) => Cplx::new(re, 0.0),
            Cx::Pair([re, im]) => Cplx::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceBlock {
    pub dim: usize,
    pub gram: GramBlock,
}

/// Either a generator name or a detailed `{"kind": ...}` object.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GramBlock {
    Name(GramName),
    Spec(GramSpec),
}

#[derive(Clone, Copy, Debug, Deserialize)]
pub enum GramName {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "spectral-laplacian-1d")]
    SpectralLaplacian1d,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GramSpec {
    Identity,
    Diag { diag_h: Vec<Real>, diag_v: Vec<Real> },
    #[serde(rename = "spectral-laplacian-1d")]
    SpectralLaplacian1d,
    Explicit { gram_h: Vec<Vec<Cx>>, gram_v: Vec<Vec<Cx>> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoeffBlock {
    Const { value: Cx },
    Poly { coeffs: Vec<Cx> },
    Power { offset: Cx, amplitude: Cx, exponent: Real },
}

impl CoeffBlock {
    fn to_coeff(&self) -> TimeCoeff<Real> {
        match self {
            CoeffBlock::Const { value } => TimeCoeff::Const(value.to_complex()),
            CoeffBlock::Poly { coeffs } => {
                TimeCoeff::Poly(coeffs.iter().map(|c| c.to_complex()).collect())
            }
            CoeffBlock::Power { offset, amplitude, exponent } => TimeCoeff::Power {
                offset: offset.to_complex(),
                amplitude: amplitude.to_complex(),
                exponent: *exponent,
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FormBlock {
    /// `c(t) = sum coeffs[j] t^j` times the V Gram matrix.
    ScalarPoly { coeffs: Vec<Cx> },
    /// `c(t) = offset + amplitude t^exponent` times the V Gram matrix.
    ScalarPower { offset: Cx, amplitude: Cx, exponent: Real },
    /// `kappa(t) diag(k²) + potential(t) I`.
    #[serde(rename = "spectral-heat-1d")]
    SpectralHeat1d { kappa: CoeffBlock, #[serde(default)] potential: Option<CoeffBlock> },
    /// Unitary-conjugated diagonal path.
    RotatingMix { eigs: Vec<Real>, rate: Real },
    /// Sampled matrices with linear interpolation.
    Table { times: Vec<Real>, matrices: Vec<Vec<Vec<Cx>>> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(default)]
    pub f: SourceBlock,
    #[serde(default)]
    pub u0: InitBlock,
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceBlock {
    #[default]
    Zero,
    Constant {
        modes: Vec<Cx>,
    },
    /// Mode vector with an optional scalar time coefficient.
    Modes {
        modes: Vec<Cx>,
        #[serde(default)]
        time: Option<CoeffBlock>,
    },
    Table {
        times: Vec<Real>,
        values: Vec<Vec<Cx>>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitBlock {
    #[default]
    Zero,
    Modes {
        modes: Vec<Cx>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_grid_cells")]
    pub grid_cells: usize,
    #[serde(default = "default_gauss_order")]
    pub gauss_order: usize,
    #[serde(default = "default_mu_cap")]
    pub mu_cap: Real,
    #[serde(default = "default_tol")]
    pub tol: Real,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_contour_points")]
    pub contour_points: usize,
}

fn default_grid_cells() -> usize {
    64
}
fn default_gauss_order() -> usize {
    4
}
fn default_mu_cap() -> Real {
    1000.0
}
fn default_tol() -> Real {
    1e-10
}
fn default_max_iter() -> usize {
    500
}
fn default_substeps() -> usize {
    2
}
fn default_contour_points() -> usize {
    400
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            grid_cells: default_grid_cells(),
            gauss_order: default_gauss_order(),
            mu_cap: default_mu_cap(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            substeps: default_substeps(),
            contour_points: default_contour_points(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub mesh_ladder: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub row_solver: RowSolverChoice,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub eval_cells: Option<usize>,
}

fn default_batch() -> usize {
    0
}
fn default_quad_order() -> usize {
    8
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    #[default]
    Measured,
    None,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RowSolverChoice {
    #[default]
    Oracle,
    At,
}

fn cx_matrix(rows: &[Vec<Cx>], dim: usize, what: &str) -> Result<CMatrix, String> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(format!("{what}: expected a {dim}x{dim} matrix"));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| rows[i][j].to_complex()))
}

fn mode_vector(modes: &[Cx], dim: usize) -> CVector {
    CVector::from_fn(dim, |i, _| {
        modes.get(i).map(|c| c.to_complex()).unwrap_or_else(|| Cplx::new(0.0, 0.0))
    })
}

impl ProblemConfig {
    pub fn build_space(&self) -> Result<Arc<SpacePair<Real>>, String> {
        let n = self.space.dim;
        if n == 0 {
            return Err("space.dim must be positive".into());
        }
        let normalized = match &self.space.gram {
            GramBlock::Name(GramName::Identity) => GramSpec::Identity,
            GramBlock::Name(GramName::SpectralLaplacian1d) => GramSpec::SpectralLaplacian1d,
            GramBlock::Spec(spec) => match spec {
                GramSpec::Identity => GramSpec::Identity,
                GramSpec::SpectralLaplacian1d => GramSpec::SpectralLaplacian1d,
                GramSpec::Diag { diag_h, diag_v } => {
                    GramSpec::Diag { diag_h: diag_h.clone(), diag_v: diag_v.clone() }
                }
                GramSpec::Explicit { gram_h, gram_v } => {
                    GramSpec::Explicit { gram_h: gram_h.clone(), gram_v: gram_v.clone() }
                }
            },
        };
        let (gh, gv) = match &normalized {
            GramSpec::Identity => (CMatrix::identity(n, n), CMatrix::identity(n, n)),
            GramSpec::Diag { diag_h, diag_v } => {
                if diag_h.len() != n || diag_v.len() != n {
                    return Err("diag_h/diag_v must have length dim".into());
                }
                let d = |v: &[Real]| {
                    CMatrix::from_fn(n, n, |i, j| {
                        if i == j { Cplx::new(v[i], 0.0) } else { Cplx::new(0.0, 0.0) }
                    })
                };
                (d(diag_h), d(diag_v))
            }
            GramSpec::SpectralLaplacian1d => {
                let gv = CMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        let k = (i + 1) as Real;
                        Cplx::new(1.0 + k * k, 0.0)
                    } else {
                        Cplx::new(0.0, 0.0)
                    }
                });
                (CMatrix::identity(n, n), gv)
            }
            GramSpec::Explicit { gram_h, gram_v } => {
                (cx_matrix(gram_h, n, "gram_h")?, cx_matrix(gram_v, n, "gram_v")?)
            }
        };
        SpacePair::new(gh, gv).map(Arc::new).map_err(|e| e.to_string())
    }

    pub fn build_form(&self, space: Arc<SpacePair<Real>>) -> Result<FormPath<Real>, String> {
        let t = self.horizon;
        match &self.form {
            FormBlock::ScalarPoly { coeffs } => Ok(FormPath::scalar_poly(
                space,
                t,
                coeffs.iter().map(|c| c.to_complex()).collect(),
            )),
            FormBlock::ScalarPower { offset, amplitude, exponent } => Ok(FormPath::scalar_power(
                space,
                t,
                offset.to_complex(),
                amplitude.to_complex(),
                *exponent,
            )),
            FormBlock::SpectralHeat1d { kappa, potential } => {
                let pot = potential
                    .as_ref()
                    .map(|p| p.to_coeff())
                    .unwrap_or(TimeCoeff::Const(Cplx::new(1.0, 0.0)));
                Ok(FormPath::spectral_heat_1d(space, t, kappa.to_coeff(), pot))
            }
            FormBlock::RotatingMix { eigs, rate } => {
                Ok(FormPath::rotating_mix(space, t, eigs.clone(), *rate))
            }
            FormBlock::Table { times, matrices } => {
                let n = self.space.dim;
                let mats: Result<Vec<CMatrix>, String> =
                    matrices.iter().map(|m| cx_matrix(m, n, "form.matrices")).collect();
                FormPath::table(space, t, times.clone(), mats?).map_err(|e| e.to_string())
            }
        }
    }

    pub fn build_source(&self) -> Result<SourceTerm<Real>, String> {
        let n = self.space.dim;
        Ok(match &self.data.f {
            SourceBlock::Zero => SourceTerm::Zero,
            SourceBlock::Constant { modes } => SourceTerm::Constant(mode_vector(modes, n)),
            SourceBlock::Modes { modes, time } => match time {
                None => SourceTerm::Constant(mode_vector(modes, n)),
                Some(coeff) => SourceTerm::Modulated {
                    profile: mode_vector(modes, n),
                    coeff: coeff.to_coeff(),
                },
            },
            SourceBlock::Table { times, values } => {
                if values.len() != times.len() {
                    return Err("data.f.table: times and values lengths differ".into());
                }
                SourceTerm::Table {
                    times: times.clone(),
                    values: values.iter().map(|v| mode_vector(v, n)).collect(),
                }
            }
        })
    }

    pub fn build_u0(&self) -> CVector {
        let n = self.space.dim;
        match &self.data.u0 {
            InitBlock::Zero => CVector::zeros(n),
            InitBlock::Modes { modes } => mode_vector(modes, n),
        }
    }
}
