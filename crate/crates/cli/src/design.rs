//! Built-in simulation designs selected by `--dgp` and tuned by `--param`.

use std::collections::BTreeMap;

use ivqr_core::dgp::{
    BinaryTreatmentDgp, DemandDgp, InstrumentDist, LatentDist, LocationScaleDgp, OutcomeModel, RankMode,
    SimulatedDataset, SupplyNoise,
};
use ivqr_core::stats::norm_quantile;

use crate::error::{CliError, CliResult};

pub const DESIGN_NAMES: [&str; 3] = ["location_scale", "demand", "binary"];

const LOCATION_SCALE_KEYS: [&str; 8] = ["a0", "a1", "b0", "b1", "pi", "rho", "nu_sd", "x_coef"];
const DEMAND_KEYS: [&str; 9] = ["a0", "a1", "b0", "b1", "s0", "s1", "s2", "noise_half_width", "z_half_width"];
const BINARY_KEYS: [&str; 13] = [
    "rank_mode", "noise_sd", "v_dist", "v_scale", "c0", "cz", "cv", "p_z1", "p_treated_z0", "p_treated_z1", "mu0",
    "mu1", "sigma",
];

#[derive(Debug, Clone)]
pub enum Design {
    LocationScale(LocationScaleDgp),
    Demand(DemandDgp),
    Binary(BinaryTreatmentDgp),
}

struct Params<'a> {
    design: &'a str,
    values: &'a BTreeMap<String, String>,
}

impl Params<'_> {
    fn number(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                CliError::Config(format!("{} parameter `{key}` expects a number, got `{v}`", self.design))
            }),
        }
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.values.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    fn check_keys(&self, allowed: &[&str], extra: &[&str]) -> CliResult<()> {
        for k in self.values.keys() {
            if !allowed.contains(&k.as_str()) && !extra.contains(&k.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown {} parameter `{k}` (expected one of: {})",
                    self.design,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

impl Design {
    /// `tuning` lists parameter names consumed elsewhere (estimation
    /// settings), which are accepted alongside the design's own keys.
    pub fn from_config(name: &str, params: &BTreeMap<String, String>, tuning: &[&str]) -> CliResult<Self> {
        let p = Params { design: name, values: params };
        let design = match name {
            "location_scale" => {
                p.check_keys(&LOCATION_SCALE_KEYS, tuning)?;
                let d = LocationScaleDgp::default();
                Design::LocationScale(LocationScaleDgp {
                    a0: p.number("a0", d.a0)?,
                    a1: p.number("a1", d.a1)?,
                    b0: p.number("b0", d.b0)?,
                    b1: p.number("b1", d.b1)?,
                    pi: p.number("pi", d.pi)?,
                    rho: p.number("rho", d.rho)?,
                    nu_sd: p.number("nu_sd", d.nu_sd)?,
                    covariate: params.get("x_coef").map(|_| p.number("x_coef", 0.0)).transpose()?,
                    ..d
                })
            }
            "demand" => {
                p.check_keys(&DEMAND_KEYS, tuning)?;
                let mut d = DemandDgp::linear(
                    p.number("a0", -2.0)?,
                    p.number("a1", 1.5)?,
                    p.number("b0", 5.0)?,
                    p.number("b1", 2.0)?,
                );
                d.supply.s0 = p.number("s0", d.supply.s0)?;
                d.supply.s1 = p.number("s1", d.supply.s1)?;
                d.supply.s2 = p.number("s2", d.supply.s2)?;
                let noise = p.number("noise_half_width", 0.5)?;
                d.noise = if noise == 0.0 {
                    SupplyNoise::None
                } else {
                    SupplyNoise::Uniform { half_width: noise }
                };
                let zw = p.number("z_half_width", 1.0)?;
                d.instrument = InstrumentDist::Uniform { lo: -zw, hi: zw };
                Design::Demand(d)
            }
            "binary" => {
                p.check_keys(&BINARY_KEYS, tuning)?;
                let base = BinaryTreatmentDgp::default();
                let noise = p.number("noise_sd", 1.0)?;
                let mode = match p.text("rank_mode", "invariant").as_str() {
                    "invariant" => RankMode::Invariant { eta_sd: noise },
                    "similar" => RankMode::SimilarSlippage { eta_sd: noise },
                    "violated" => RankMode::ViolatedMatch { match_sd: noise },
                    other => {
                        return Err(CliError::Config(format!(
                            "rank_mode must be invariant, similar or violated, got `{other}`"
                        )))
                    }
                };
                let scale = p.number("v_scale", 1.0)?;
                let v_dist = match p.text("v_dist", "normal").as_str() {
                    "normal" => LatentDist::Normal { sd: scale },
                    "uniform" => LatentDist::Uniform { half_width: scale },
                    other => return Err(CliError::Config(format!("v_dist must be normal or uniform, got `{other}`"))),
                };
                let cv = p.number("cv", base.cv)?;
                // treatment probabilities are a convenience for normal V
                let (mut c0, mut cz) = (p.number("c0", base.c0)?, p.number("cz", base.cz)?);
                if params.contains_key("p_treated_z0") || params.contains_key("p_treated_z1") {
                    let LatentDist::Normal { sd } = v_dist else {
                        return Err(CliError::Config("p_treated_z0/p_treated_z1 need v_dist = normal".into()));
                    };
                    let p0 = p.number("p_treated_z0", 0.2)?;
                    let p1 = p.number("p_treated_z1", 0.7)?;
                    if [p0, p1].iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                        return Err(CliError::Config("treatment probabilities must lie in (0, 1)".into()));
                    }
                    c0 = cv * sd * norm_quantile(p0);
                    cz = cv * sd * norm_quantile(p1) - c0;
                }
                let pz1 = p.number("p_z1", 0.5)?;
                let sigma = p.number("sigma", 1.0)?;
                Design::Binary(BinaryTreatmentDgp {
                    mode,
                    v_dist,
                    z_support: vec![0.0, 1.0],
                    z_probs: vec![1.0 - pz1, pz1],
                    c0,
                    cz,
                    cv,
                    outcome: OutcomeModel::Gaussian {
                        mu: [p.number("mu0", 0.0)?, p.number("mu1", 1.0)?],
                        sigma: [sigma, sigma],
                    },
                })
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown dgp `{other}` (expected one of: {})",
                    DESIGN_NAMES.join(", ")
                )))
            }
        };
        design.validate()?;
        Ok(design)
    }

    fn validate(&self) -> CliResult<()> {
        match self {
            Design::LocationScale(d) => d.validate()?,
            Design::Demand(d) => d.validate()?,
            Design::Binary(d) => d.validate()?,
        }
        Ok(())
    }

    pub fn simulate(&self, n: usize, seed: u64) -> CliResult<SimulatedDataset> {
        Ok(match self {
            Design::LocationScale(d) => d.simulate(n, seed)?,
            Design::Demand(d) => d.simulate(n, seed)?,
            Design::Binary(d) => d.simulate(n, seed)?,
        })
    }

    /// True structural effect of the endogenous variable at `tau`.
    pub fn alpha(&self, tau: f64) -> f64 {
        match self {
            Design::LocationScale(d) => d.alpha(tau),
            Design::Demand(d) => (d.alpha)(tau),
            Design::Binary(d) => d.outcome.quantile(1, tau) - d.outcome.quantile(0, tau),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_match_the_library_designs() {
        let Design::LocationScale(d) = Design::from_config("location_scale", &BTreeMap::new(), &[]).unwrap() else {
            panic!()
        };
        assert_eq!(d, LocationScaleDgp::default());
        let Design::Binary(b) = Design::from_config("binary", &BTreeMap::new(), &[]).unwrap() else {
            panic!()
        };
        assert_eq!(b, BinaryTreatmentDgp::default());
        let demand = Design::from_config("demand", &BTreeMap::new(), &[]).unwrap();
        assert!((demand.alpha(0.5) + 1.25).abs() < 1e-15);
    }

    #[test]
    fn treatment_probabilities_set_the_selection_index() {
        let d = Design::from_config("binary", &params(&[("p_treated_z0", "0.3"), ("p_treated_z1", "0.9")]), &[]).unwrap();
        let Design::Binary(b) = d else { panic!() };
        let probs = b.treatment_probabilities();
        // the normal quantile round-trips to about 1e-11
        assert!((probs[0] - 0.3).abs() < 1e-9 && (probs[1] - 0.9).abs() < 1e-9, "{probs:?}");
    }

    #[test]
    fn unknown_names_and_keys_are_config_errors() {
        assert!(matches!(Design::from_config("probit", &BTreeMap::new(), &[]), Err(CliError::Config(_))));
        assert!(matches!(
            Design::from_config("demand", &params(&[("rho", "1")]), &[]),
            Err(CliError::Config(_))
        ));
        assert!(Design::from_config("demand", &params(&[("subsample_reps", "5")]), &["subsample_reps"]).is_ok());
        assert!(matches!(
            Design::from_config("location_scale", &params(&[("rho", "x")]), &[]),
            Err(CliError::Config(_))
        ));
    }
}
