//! Seeded instance generators: almost-commuting pairs with a calibrated
//! commutator norm, and one-parameter families of Hermitian operators.
//!
//! Everything is driven by [`SplitMix64`], so a `GeneratorSpec` pins the
//! produced matrices bit for bit, independent of platform or run.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BaseKind, BaseSpace, OperatorField};
use crate::linalg::{commutator_norm, exp_i_hermitian, operator_norm};
use crate::matrix::{ComplexMatrix, HermitianOperator, UnitaryOperator};

/// 64-bit mixing generator with the SplitMix64 recurrence:
///
/// ```text
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// output = z ^ (z >> 31)
/// ```
///
/// All arithmetic is wrapping, so any implementation language reproduces
/// the identical stream from the same seed.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    pub fn complex_symmetric(&mut self) -> Complex64 {
        Complex64::new(self.symmetric(), self.symmetric())
    }
}

/// Requested eigenvalue layout for generated Hermitian operators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSpec {
    /// Exactly these eigenvalues.
    Explicit(Vec<f64>),
    /// Independent uniform draws from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Draws near the given centers, spread uniformly by at most `spread`.
    Clustered { centers: Vec<f64>, spread: f64 },
}

/// Shape of a generated operator family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldShape {
    /// The same operator at every node.
    Constant,
    /// A fixed diagonal conjugated by a smooth unitary path; `rate` scales
    /// how far the frame turns across the base.
    ConjugatedSmooth { rate: f64 },
    /// `[[x, c], [c, -x]] ⊗ I`, eigenvalue curves `±sqrt(x² + c²)`.
    AvoidedCrossing { coupling: f64 },
    /// A fixed conjugation of `diag(x, -x) ⊗ I`, eigenvalue curves `±x`.
    ExactCrossing,
}

/// Full description of a generated instance; serializing the spec and
/// regenerating reproduces identical artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    /// Operator dimension for pair generation (`n * p` for fields).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Number of eigenvalue curves for field generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module_rank: Option<usize>,
    /// Fiber dimension per curve for field generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_dim: Option<usize>,
    pub spectrum: SpectrumSpec,
    /// Pair generation: calibrate `‖[u, h]‖` into `[target/2, target]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_shape: Option<FieldShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseSpace>,
}

impl GeneratorSpec {
    pub fn pair(seed: u64, dim: usize, spectrum: SpectrumSpec, target_delta: f64) -> Self {
        Self {
            seed,
            dim: Some(dim),
            module_rank: None,
            fiber_dim: None,
            spectrum,
            target_delta: Some(target_delta),
            field_shape: None,
            grid_size: None,
            base: None,
        }
    }

    pub fn field(
        seed: u64,
        module_rank: usize,
        fiber_dim: usize,
        spectrum: SpectrumSpec,
        shape: FieldShape,
        grid_size: usize,
        base: BaseSpace,
    ) -> Self {
        Self {
            seed,
            dim: None,
            module_rank: Some(module_rank),
            fiber_dim: Some(fiber_dim),
            spectrum,
            target_delta: Some(0.0),
            field_shape: Some(shape),
            grid_size: Some(grid_size),
            base: Some(base),
        }
        .normalized_for_field()
    }

    fn normalized_for_field(mut self) -> Self {
        self.target_delta = None;
        self
    }

    pub fn is_field(&self) -> bool {
        self.field_shape.is_some()
    }
}

/// Hermitian operator, unitary, and the calibrated commutator norm.
#[derive(Clone, Debug)]
pub struct PairInstance {
    pub h: HermitianOperator,
    pub u: UnitaryOperator,
    pub measured_delta: f64,
}

fn sample_spectrum(spec: &SpectrumSpec, dim: usize, rng: &mut SplitMix64) -> Result<Vec<f64>> {
    let mut values = match spec {
        SpectrumSpec::Explicit(v) => {
            if v.len() != dim {
                return Err(Error::MismatchedInputs {
                    context: format!(
                        "explicit spectrum lists {} values for dimension {}",
                        v.len(),
                        dim
                    ),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    context: "explicit spectrum".into(),
                });
            }
            v.clone()
        }
        SpectrumSpec::Uniform { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidInput {
                    context: format!("uniform spectrum needs lo < hi, got [{lo}, {hi}]"),
                });
            }
            (0..dim).map(|_| lo + (hi - lo) * rng.next_f64()).collect()
        }
        SpectrumSpec::Clustered { centers, spread } => {
            if centers.is_empty() {
                return Err(Error::InvalidInput {
                    context: "clustered spectrum needs at least one center".into(),
                });
            }
            if !spread.is_finite() || *spread < 0.0 {
                return Err(Error::NegativeParameter {
                    name: "spread",
                    value: *spread,
                });
            }
            (0..dim)
                .map(|i| centers[i % centers.len()] + spread * rng.symmetric())
                .collect()
        }
    };
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

fn random_unitary_frame(rng: &mut SplitMix64, n: usize) -> UnitaryOperator {
    let g = ComplexMatrix::from_fn(n, n, |_, _| rng.complex_symmetric());
    let h = HermitianOperator::new(g.hermitian_part()).expect("hermitian part");
    exp_i_hermitian(&h, 1.0)
}

fn random_hermitian(rng: &mut SplitMix64, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| rng.complex_symmetric()).hermitian_part()
}

/// Generates `(h, u)` with the requested spectrum on `h` and
/// `‖[u, h]‖` calibrated into `[target/2, target]`.
///
/// `u = exp(i (S_c + η S_p))` where `S_c` commutes with `h` and `S_p` is a
/// normalized random Hermitian perturbation; `η` is found by bisection on
/// the measured commutator norm. `target_delta = 0` keeps `η = 0`.
pub fn gen_almost_commuting_pair(spec: &GeneratorSpec) -> Result<PairInstance> {
    let dim = match (spec.dim, &spec.spectrum) {
        (Some(d), _) => d,
        (None, SpectrumSpec::Explicit(v)) => v.len(),
        (None, _) => {
            return Err(Error::InvalidInput {
                context: "pair generation needs dim or an explicit spectrum".into(),
            })
        }
    };
    if dim == 0 {
        return Err(Error::EmptyMatrix);
    }
    let target = spec.target_delta.unwrap_or(0.0);
    if !target.is_finite() || target < 0.0 {
        return Err(Error::NegativeParameter {
            name: "target_delta",
            value: target,
        });
    }

    let mut rng = SplitMix64::new(spec.seed);
    let values = sample_spectrum(&spec.spectrum, dim, &mut rng)?;
    let q = random_unitary_frame(&mut rng, dim);
    let h_matrix = ComplexMatrix::diag_real(&values)
        .from_frame(q.matrix())
        .hermitian_part();
    let h = HermitianOperator::new(h_matrix)?;

    // S_c shares the frame of h, so it commutes with it exactly.
    let g: Vec<f64> = (0..dim).map(|_| rng.symmetric()).collect();
    let s_c = ComplexMatrix::diag_real(&g)
        .from_frame(q.matrix())
        .hermitian_part();
    let s_p_raw = random_hermitian(&mut rng, dim);
    let s_p_norm = operator_norm(&s_p_raw);

    let build = |eta: f64| -> Result<UnitaryOperator> {
        let m = s_c.add(&s_p_raw.scale_re(eta));
        let herm = HermitianOperator::new(m.hermitian_part())?;
        Ok(exp_i_hermitian(&herm, 1.0))
    };
    let measure = |u: &UnitaryOperator| commutator_norm(u.matrix(), h.matrix());

    if target == 0.0 {
        let u = build(0.0)?;
        let measured = measure(&u);
        return Ok(PairInstance {
            h,
            u,
            measured_delta: measured,
        });
    }
    if s_p_norm <= f64::MIN_POSITIVE {
        return Err(Error::Generation {
            message: "perturbation direction vanished; retry with another seed".into(),
        });
    }

    // Linearized guess, then doubling to bracket, then bisection into the
    // band [target/2, target].
    let lin_rate = commutator_norm(&s_p_raw, h.matrix()).max(f64::MIN_POSITIVE);
    let mut eta_hi = (target / lin_rate).min(1.0).max(1e-12);
    let mut f_hi;
    let mut eta_lo = 0.0;
    let mut grow = 0;
    loop {
        let u = build(eta_hi)?;
        f_hi = measure(&u);
        if f_hi >= target * 0.5 {
            if f_hi <= target {
                return Ok(PairInstance {
                    h,
                    u,
                    measured_delta: f_hi,
                });
            }
            break;
        }
        eta_lo = eta_hi;
        eta_hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Generation {
                message: format!(
                    "commutator norm plateaus at {f_hi:.3e} below target {target:.3e}; \
                     the spectrum may be too degenerate"
                ),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (eta_lo + eta_hi);
        let u = build(mid)?;
        let f = measure(&u);
        if f > target {
            eta_hi = mid;
        } else if f < target * 0.5 {
            eta_lo = mid;
        } else {
            return Ok(PairInstance {
                h,
                u,
                measured_delta: f,
            });
        }
    }
    Err(Error::Generation {
        message: format!(
            "bisection could not land the commutator norm in \
             [{:.3e}, {:.3e}]; the spectrum may be too degenerate",
            target * 0.5,
            target
        ),
    })
}

/// Generates a Hermitian operator family on a uniform grid.
pub fn gen_field(spec: &GeneratorSpec) -> Result<OperatorField> {
    let shape = spec.field_shape.clone().ok_or_else(|| Error::InvalidInput {
        context: "field generation needs a field_shape".into(),
    })?;
    let n = spec.module_rank.ok_or_else(|| Error::InvalidInput {
        context: "field generation needs module_rank".into(),
    })?;
    let p = spec.fiber_dim.unwrap_or(1);
    if n == 0 || p == 0 {
        return Err(Error::EmptyMatrix);
    }
    let np = n * p;
    let grid_size = spec.grid_size.unwrap_or(101);
    if grid_size < 2 {
        return Err(Error::InvalidInput {
            context: "grid_size must be at least 2".into(),
        });
    }
    let base = spec.base.clone().unwrap_or(BaseSpace {
        kind: BaseKind::Interval,
        a: -1.0,
        b: 1.0,
    });
    base.validate()?;

    let mut rng = SplitMix64::new(spec.seed);
    let grid: Vec<f64> = (0..grid_size)
        .map(|j| base.a + (base.b - base.a) * j as f64 / (grid_size - 1) as f64)
        .collect();

    let values: Vec<HermitianOperator> = match shape {
        FieldShape::Constant => {
            let vals = sample_spectrum(&spec.spectrum, np, &mut rng)?;
            let q = random_unitary_frame(&mut rng, np);
            let k = ComplexMatrix::diag_real(&vals)
                .from_frame(q.matrix())
                .hermitian_part();
            let op = HermitianOperator::new(k)?;
            vec![op; grid_size]
        }
        FieldShape::ConjugatedSmooth { rate } => {
            if !rate.is_finite() {
                return Err(Error::NonFinite {
                    context: "rate".into(),
                });
            }
            let vals = sample_spectrum(&spec.spectrum, np, &mut rng)?;
            let d = ComplexMatrix::diag_real(&vals);
            let gen_raw = random_hermitian(&mut rng, np);
            let gen_norm = operator_norm(&gen_raw).max(f64::MIN_POSITIVE);
            let generator = HermitianOperator::new(gen_raw.scale_re(1.0 / gen_norm))?;
            let span = base.b - base.a;
            grid.iter()
                .map(|&x| {
                    let frac = (x - base.a) / span;
                    let angle = match base.kind {
                        BaseKind::Interval => rate * frac,
                        // Periodic angle keeps the two endpoint fibers equal.
                        BaseKind::Circle => {
                            rate * (2.0 * std::f64::consts::PI * frac).sin()
                        }
                    };
                    let v = exp_i_hermitian(&generator, angle);
                    HermitianOperator::new(d.from_frame(v.matrix()).hermitian_part())
                })
                .collect::<Result<Vec<_>>>()?
        }
        FieldShape::AvoidedCrossing { coupling } => {
            if !coupling.is_finite() {
                return Err(Error::NonFinite {
                    context: "coupling".into(),
                });
            }
            if np % 2 != 0 {
                return Err(Error::DimensionMismatch {
                    context: format!("avoided crossing needs even total dimension, got {np}"),
                });
            }
            let id = ComplexMatrix::identity(np / 2);
            grid.iter()
                .map(|&x| {
                    let core = ComplexMatrix::from_rows(&[
                        vec![Complex64::new(x, 0.0), Complex64::new(coupling, 0.0)],
                        vec![Complex64::new(coupling, 0.0), Complex64::new(-x, 0.0)],
                    ])
                    .expect("2x2 template");
                    HermitianOperator::new(core.kron(&id))
                })
                .collect::<Result<Vec<_>>>()?
        }
        FieldShape::ExactCrossing => {
            if np % 2 != 0 {
                return Err(Error::DimensionMismatch {
                    context: format!("exact crossing needs even total dimension, got {np}"),
                });
            }
            let frame = random_unitary_frame(&mut rng, np);
            grid.iter()
                .map(|&x| {
                    let mut diag = vec![x; np / 2];
                    diag.extend(vec![-x; np / 2]);
                    let k = ComplexMatrix::diag_real(&diag)
                        .from_frame(frame.matrix())
                        .hermitian_part();
                    HermitianOperator::new(k)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    OperatorField::new(base, grid, p, n, values)
}
