//! Named families of conformal factors for sweeps.
//!
//! A family spec is a `;`-separated list of entries:
//!
//! | entry                 | members                                          |
//! |-----------------------|--------------------------------------------------|
//! | `constant:c1,c2,..`   | `mu = c`                                         |
//! | `bubble:t1,t2,..`     | dilation pullback factor with parameter `t`      |
//! | `twobubble:t1,t2,..`  | product of bubbles at both poles                 |
//! | `poly:a0,a1,..`       | `mu(u) = sum a_i u^i`                            |
//! | `randpoly:count:deg`  | random positive polynomials (seeded)             |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::ConformalFactor;
use crate::error::{Error, Result};

/// One conformal factor with the family it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub family: String,
    /// Family parameter: the constant, the bubble `t`, or the member index.
    pub parameter: f64,
    pub factor: ConformalFactor,
}

fn numbers(name: &str, args: &str) -> Result<Vec<f64>> {
    args.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("family `{name}`: cannot parse `{s}`")))
        })
        .collect()
}

/// Random polynomial `sum a_i u^i` of the given degree with
/// `min_{[-1,1]} mu >= a_0 - sum_{i>0} |a_i| >= 0.2`.
pub fn random_positive_polynomial(
    n: usize,
    degree: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ConformalFactor> {
    let mut coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let spread: f64 = coeffs.iter().skip(1).map(|c: &f64| c.abs()).sum();
    coeffs[0] = spread + rng.gen_range(0.2..1.0);
    ConformalFactor::polynomial(n, coeffs)
}

/// Expands a family spec into conformal factors on `S^n`. Random members
/// draw from a generator seeded with `seed`.
pub fn family_generators(spec: &str, n: usize, seed: u64) -> Result<Vec<FamilyMember>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for entry in spec.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (name, args) = entry.split_once(':').ok_or_else(|| {
            Error::Config(format!("family entry `{entry}` needs `name:arguments`"))
        })?;
        let push = |out: &mut Vec<FamilyMember>, parameter: f64, factor: ConformalFactor| {
            out.push(FamilyMember {
                family: name.to_string(),
                parameter,
                factor,
            })
        };
        match name {
            "constant" => {
                for c in numbers(name, args)? {
                    push(&mut out, c, ConformalFactor::constant(n, c)?);
                }
            }
            "bubble" => {
                for t in numbers(name, args)? {
                    push(&mut out, t, ConformalFactor::dilation(n, t)?);
                }
            }
            "twobubble" => {
                for t in numbers(name, args)? {
                    push(&mut out, t, ConformalFactor::two_bubble(n, t)?);
                }
            }
            "poly" => push(
                &mut out,
                0.0,
                ConformalFactor::polynomial(n, numbers(name, args)?)?,
            ),
            "randpoly" => {
                let (count, degree) = args
                    .split_once(':')
                    .and_then(|(c, d)| {
                        Some((
                            c.trim().parse::<usize>().ok()?,
                            d.trim().parse::<usize>().ok()?,
                        ))
                    })
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "randpoly expects `randpoly:count:degree`, got `{entry}`"
                        ))
                    })?;
                for i in 0..count {
                    push(
                        &mut out,
                        i as f64,
                        random_positive_polynomial(n, degree, &mut rng)?,
                    );
                }
            }
            other => return Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("family spec `{spec}` is empty")));
    }
    Ok(out)
}

/// The families swept by default: the round metric, single and antipodal
/// double bubbles, and a few random polynomial profiles.
pub const SHIPPED_FAMILIES: &str = "constant:1;bubble:1.5,2,3;twobubble:1.25,1.5,2;randpoly:4:4";

pub fn shipped_families(n: usize, seed: u64) -> Result<Vec<FamilyMember>> {
    family_generators(SHIPPED_FAMILIES, n, seed)
}
