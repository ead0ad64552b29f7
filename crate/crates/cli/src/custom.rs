//! `model = "custom"`: coefficients supplied inline, either as TOML values or
//! as strings holding JSON.
//!
//! ```toml
//! [model]
//! name = "custom"
//!
//! [model.custom]
//! damping_lienard = [[0, 0, 3]]                                  # f_i coefficients
//! restoring = '[[{"exponents": [1], "coeff": -1}]]'              # g_i(x) as term lists
//! diffusion = 1.0                                                # s*I, a matrix, or term lists
//! ```
//!
//! `damping_general` replaces `damping_lienard` with term lists over
//! `(x, y)`. `potential` gives `G(x)`; the restoring force defaults to its
//! gradient, and for one coordinate `G` defaults to the antiderivative of `g`.

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;
use stochosc_core::phase::{Damping, Diffusion};
use stochosc_core::{MultiPolynomial, OscillatorModel, Polynomial, Term};

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    pub n: Option<usize>,
    pub damping_lienard: Option<toml::Value>,
    pub damping_general: Option<toml::Value>,
    pub restoring: Option<toml::Value>,
    pub potential: Option<toml::Value>,
    pub diffusion: Option<toml::Value>,
}

fn to_json(key: &str, v: &toml::Value) -> Result<Value> {
    match v {
        toml::Value::String(s) => serde_json::from_str(s).with_context(|| format!("custom `{key}` is not valid JSON")),
        other => serde_json::to_value(other).with_context(|| format!("custom `{key}`")),
    }
}

fn field<T: DeserializeOwned>(key: &str, v: &toml::Value, shape: &str) -> Result<T> {
    serde_json::from_value(to_json(key, v)?).map_err(|e| anyhow!("custom `{key}` should be {shape}: {e}"))
}

fn poly(key: &str, nvars: usize, terms: &[Term]) -> Result<MultiPolynomial> {
    MultiPolynomial::from_terms(nvars, terms).map_err(|e| anyhow!("custom `{key}`: {e}"))
}

pub fn build_custom(c: &CustomModel) -> Result<OscillatorModel> {
    let lienard: Option<Vec<Polynomial>> = c
        .damping_lienard
        .as_ref()
        .map(|v| field("damping_lienard", v, "a list of coefficient lists"))
        .transpose()?;
    let general: Option<Vec<Vec<Term>>> = c
        .damping_general
        .as_ref()
        .map(|v| field("damping_general", v, "a list of term lists"))
        .transpose()?;
    let restoring: Option<Vec<Vec<Term>>> = c
        .restoring
        .as_ref()
        .map(|v| field("restoring", v, "a list of term lists"))
        .transpose()?;
    let potential: Option<Vec<Term>> = c
        .potential
        .as_ref()
        .map(|v| field("potential", v, "a term list"))
        .transpose()?;

    let n = c
        .n
        .or(restoring.as_ref().map(Vec::len))
        .or(potential.as_ref().and_then(|p| p.first()).map(|t| t.exponents.len()))
        .or(lienard.as_ref().map(Vec::len))
        .or(general.as_ref().map(Vec::len))
        .ok_or_else(|| anyhow!("custom model needs `restoring` or `potential`"))?;
    if n == 0 {
        bail!("custom model needs at least one coordinate");
    }

    let damping = match (lienard, general) {
        (Some(_), Some(_)) => bail!("give either `damping_lienard` or `damping_general`, not both"),
        (Some(f), None) => Damping::Lienard(f),
        (None, Some(b)) => Damping::General(
            b.iter()
                .map(|t| poly("damping_general", 2 * n, t))
                .collect::<Result<_>>()?,
        ),
        (None, None) => Damping::Lienard(vec![Polynomial::zero(); n]),
    };

    let diffusion = match &c.diffusion {
        None => bail!("custom model needs `diffusion`"),
        Some(v) => diffusion(&to_json("diffusion", v)?, n)?,
    };

    let potential = potential.map(|t| poly("potential", n, &t)).transpose()?;
    let model = match (restoring, potential) {
        (None, None) => bail!("custom model needs `restoring` or `potential`"),
        (None, Some(g)) => OscillatorModel::from_potential("custom", damping, g, diffusion),
        (Some(r), pot) => {
            let g: Vec<MultiPolynomial> = r.iter().map(|t| poly("restoring", n, t)).collect::<Result<_>>()?;
            let pot = match pot {
                Some(p) => Some(p),
                None if n == 1 => g[0].to_univariate().map(|u| u.antiderivative().to_multi(0, 1)),
                None => None,
            };
            OscillatorModel::new("custom", damping, g, pot, diffusion)
        }
    };
    model.map_err(|e| anyhow!("custom model: {e}"))
}

fn diffusion(v: &Value, n: usize) -> Result<Diffusion> {
    if let Some(s) = v.as_f64() {
        return Ok(Diffusion::scalar_identity(n, s));
    }
    if let Ok(m) = serde_json::from_value::<Vec<Vec<f64>>>(v.clone()) {
        return Ok(Diffusion::Constant(m));
    }
    let rows: Vec<Vec<Vec<Term>>> = serde_json::from_value(v.clone())
        .map_err(|e| anyhow!("custom `diffusion` should be a number, a matrix, or a matrix of term lists: {e}"))?;
    let rows = rows
        .iter()
        .map(|row| row.iter().map(|t| poly("diffusion", 2 * n, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Diffusion::Polynomial(rows))
}
