//! Position-based, user-browsing and cascade click models.
//!
//! Each model exposes a sampler and the closed-form per-position marginals
//! `P(o_i = 1)` and `P(c_i = 1)` for a list with known relevance
//! probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `P(o_i) = rho_i ^ tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbmParams {
    pub rho: Vec<f64>,
    pub tau: f64,
}

impl Default for PbmParams {
    fn default() -> Self {
        Self::with_len(crate::data::DEFAULT_MAX_LEN)
    }
}

impl PbmParams {
    /// `rho_i = 1 / i` for ranks `1..=max_rank`, `tau = 1`.
    pub fn with_len(max_rank: usize) -> Self {
        Self {
            rho: (1..=max_rank).map(|i| 1.0 / i as f64).collect(),
            tau: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("PBM tau {} must be >= 0", self.tau)));
        }
        for (i, &r) in self.rho.iter().enumerate() {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Config(format!("PBM rho[{}] = {r} outside (0, 1]", i + 1)));
            }
            if i > 0 && r > self.rho[i - 1] {
                return Err(Error::Config("PBM rho must be non-increasing in rank".into()));
            }
        }
        Ok(())
    }

    pub fn observation(&self, rank: usize) -> f64 {
        self.rho[rank - 1].powf(self.tau)
    }
}

/// `gamma[i - 1][j]` is the examination probability at rank `i` when the
/// last click happened at rank `j` (`j = 0`: no click yet), `j < i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UbmParams {
    pub gamma: Vec<Vec<f64>>,
}

impl Default for UbmParams {
    fn default() -> Self {
        Self::with_len(crate::data::DEFAULT_MAX_LEN)
    }
}

impl UbmParams {
    /// Distance decay `1 / (i - j)^0.7`, capped at 1.
    pub fn with_len(max_rank: usize) -> Self {
        let gamma = (1..=max_rank)
            .map(|i| (0..i).map(|j| (1.0 / ((i - j) as f64).powf(0.7)).min(1.0)).collect())
            .collect();
        Self { gamma }
    }

    pub fn constant(max_rank: usize, value: f64) -> Self {
        Self {
            gamma: (1..=max_rank).map(|i| vec![value; i]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.gamma {
            if let Some(g) = row.iter().find(|g| !(**g >= 0.0 && **g <= 1.0)) {
                return Err(Error::Config(format!("UBM gamma entry {g} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn entry(&self, rank: usize, last_click: usize) -> Result<f64> {
        self.gamma
            .get(rank - 1)
            .and_then(|row| row.get(last_click))
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "UBM gamma table has no entry for rank {rank}, last click {last_click}"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcmParams {
    /// Continue probability after a skipped result.
    pub gamma1: f64,
    /// Continue probability after clicking a non-relevant result.
    pub gamma2: f64,
    /// Continue probability after clicking a relevant result.
    pub gamma3: f64,
}

impl CcmParams {
    pub const fn navigational() -> Self {
        Self {
            gamma1: 0.5,
            gamma2: 0.10,
            gamma3: 0.04,
        }
    }

    pub const fn informational() -> Self {
        Self {
            gamma1: 0.5,
            gamma2: 0.40,
            gamma3: 0.27,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.gamma1, self.gamma2, self.gamma3] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::Config(format!("CCM parameter {g} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn continue_prob(&self, clicked: bool, rel: f64) -> f64 {
        if clicked {
            self.gamma2 * (1.0 - rel) + self.gamma3 * rel
        } else {
            self.gamma1
        }
    }
}

impl Default for CcmParams {
    fn default() -> Self {
        Self::navigational()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ClickModel {
    Pbm(PbmParams),
    Ubm(UbmParams),
    Ccm(CcmParams),
}

/// Outcome of one browsing session at a single rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub observed: bool,
    pub clicked: bool,
}

fn check_probs(rel: &[f64]) -> Result<()> {
    match rel.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        Some(p) => Err(Error::Domain(format!("relevance probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

pub fn browse_pbm<R: Rng + ?Sized>(rel: &[f64], params: &PbmParams, rng: &mut R) -> Result<Vec<Interaction>> {
    check_probs(rel)?;
    if rel.len() > params.rho.len() {
        return Err(Error::Config(format!(
            "list of length {} exceeds PBM rho table of length {}",
            rel.len(),
            params.rho.len()
        )));
    }
    Ok(rel
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let observed = rng.random::<f64>() < params.observation(i + 1);
            let relevant = rng.random::<f64>() < r;
            Interaction {
                observed,
                clicked: observed && relevant,
            }
        })
        .collect())
}

pub fn browse_ubm<R: Rng + ?Sized>(rel: &[f64], params: &UbmParams, rng: &mut R) -> Result<Vec<Interaction>> {
    check_probs(rel)?;
    let mut last_click = 0usize;
    let mut out = Vec::with_capacity(rel.len());
    for (i, &r) in rel.iter().enumerate() {
        let rank = i + 1;
        let observed = rng.random::<f64>() < params.entry(rank, last_click)?;
        let relevant = rng.random::<f64>() < r;
        let clicked = observed && relevant;
        if clicked {
            last_click = rank;
        }
        out.push(Interaction { observed, clicked });
    }
    Ok(out)
}

pub fn browse_ccm<R: Rng + ?Sized>(rel: &[f64], params: &CcmParams, rng: &mut R) -> Result<Vec<Interaction>> {
    check_probs(rel)?;
    params.validate()?;
    let mut observing = true;
    let mut out = Vec::with_capacity(rel.len());
    for &r in rel {
        if !observing {
            out.push(Interaction {
                observed: false,
                clicked: false,
            });
            continue;
        }
        let clicked = rng.random::<f64>() < r;
        out.push(Interaction {
            observed: true,
            clicked,
        });
        observing = rng.random::<f64>() < params.continue_prob(clicked, r);
    }
    Ok(out)
}

impl ClickModel {
    /// Same model with its bias degree set: `tau` for PBM, `gamma1` for CCM.
    pub fn with_degree(&self, degree: f64) -> Result<ClickModel> {
        let m = match self {
            ClickModel::Pbm(p) => ClickModel::Pbm(PbmParams {
                tau: degree,
                ..p.clone()
            }),
            ClickModel::Ccm(p) => ClickModel::Ccm(CcmParams { gamma1: degree, ..*p }),
            ClickModel::Ubm(_) => return Err(Error::Config("UBM has no single bias degree".into())),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn family(&self) -> &'static str {
        match self {
            ClickModel::Pbm(_) => "pbm",
            ClickModel::Ubm(_) => "ubm",
            ClickModel::Ccm(_) => "ccm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClickModel::Pbm(p) => p.validate(),
            ClickModel::Ubm(p) => p.validate(),
            ClickModel::Ccm(p) => p.validate(),
        }
    }

    pub fn browse<R: Rng + ?Sized>(&self, rel: &[f64], rng: &mut R) -> Result<Vec<Interaction>> {
        match self {
            ClickModel::Pbm(p) => browse_pbm(rel, p, rng),
            ClickModel::Ubm(p) => browse_ubm(rel, p, rng),
            ClickModel::Ccm(p) => browse_ccm(rel, p, rng),
        }
    }

    /// Closed-form `(P(o_i = 1), P(c_i = 1))` per rank.
    pub fn marginals(&self, rel: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_probs(rel)?;
        let n = rel.len();
        let mut obs = Vec::with_capacity(n);
        let mut clk = Vec::with_capacity(n);
        match self {
            ClickModel::Pbm(p) => {
                if n > p.rho.len() {
                    return Err(Error::Config("list longer than PBM rho table".into()));
                }
                for (i, &r) in rel.iter().enumerate() {
                    let o = p.observation(i + 1);
                    obs.push(o);
                    clk.push(o * r);
                }
            }
            ClickModel::Ubm(p) => {
                // distribution over the rank of the last click (0 = none)
                let mut last = vec![0.0; n + 1];
                last[0] = 1.0;
                for (i, &r) in rel.iter().enumerate() {
                    let rank = i + 1;
                    let mut o = 0.0;
                    let mut c = 0.0;
                    for j in 0..rank {
                        let g = p.entry(rank, j)?;
                        o += last[j] * g;
                        let moved = last[j] * g * r;
                        c += moved;
                        last[j] -= moved;
                    }
                    last[rank] = c;
                    obs.push(o);
                    clk.push(c);
                }
            }
            ClickModel::Ccm(p) => {
                let mut o = 1.0;
                for &r in rel {
                    obs.push(o);
                    clk.push(o * r);
                    o *= (1.0 - r) * p.gamma1 + r * p.continue_prob(true, r);
                }
            }
        }
        Ok((obs, clk))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn pbm_tau_zero_observes_everything() {
        let p = PbmParams {
            tau: 0.0,
            ..PbmParams::with_len(5)
        };
        let (obs, _) = ClickModel::Pbm(p.clone()).marginals(&[0.3; 5]).unwrap();
        assert!(obs.iter().all(|&o| o == 1.0));
        let s = browse_pbm(&[0.3; 5], &p, &mut rng()).unwrap();
        assert!(s.iter().all(|x| x.observed));
    }

    #[test]
    fn pbm_default_rank4() {
        assert_eq!(PbmParams::with_len(10).observation(4), 0.25);
    }

    #[test]
    fn pbm_rejects_long_lists() {
        assert!(browse_pbm(&[0.5; 4], &PbmParams::with_len(3), &mut rng()).is_err());
    }

    #[test]
    fn ubm_degenerate_tables() {
        let all = UbmParams::constant(6, 1.0);
        for _ in 0..50 {
            let s = browse_ubm(&[0.5; 6], &all, &mut rng()).unwrap();
            assert!(s.iter().all(|x| x.observed));
        }
        let mut first_only = UbmParams::constant(6, 0.0);
        first_only.gamma[0][0] = 1.0;
        let mut r = rng();
        for _ in 0..200 {
            let s = browse_ubm(&[0.9; 6], &first_only, &mut r).unwrap();
            assert!(s[0].observed);
            assert!(s[1..].iter().all(|x| !x.observed));
        }
    }

    #[test]
    fn ubm_missing_entry_errors() {
        let p = UbmParams {
            gamma: vec![vec![1.0], vec![1.0]],
        };
        assert!(browse_ubm(&[0.5; 3], &p, &mut rng()).is_err());
    }

    #[test]
    fn ubm_default_shape() {
        let p = UbmParams::with_len(4);
        assert_eq!(p.gamma[0], vec![1.0]);
        assert!((p.gamma[3][0] - 1.0 / 4f64.powf(0.7)).abs() < 1e-15);
        assert_eq!(p.gamma[3][3], 1.0);
        p.validate().unwrap();
    }

    #[test]
    fn ccm_zero_params_stop_after_first() {
        let p = CcmParams {
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
        };
        let mut r = rng();
        for _ in 0..100 {
            let s = browse_ccm(&[0.5; 5], &p, &mut r).unwrap();
            assert!(s[0].observed);
            assert!(s[1..].iter().all(|x| !x.observed));
        }
    }

    #[test]
    fn ccm_defaults_are_navigational() {
        let p = CcmParams::default();
        assert_eq!((p.gamma1, p.gamma2, p.gamma3), (0.5, 0.10, 0.04));
        let i = CcmParams::informational();
        assert_eq!((i.gamma2, i.gamma3), (0.40, 0.27));
    }

    #[test]
    fn clicks_imply_observation_and_ccm_prefix() {
        let rel = [0.9, 0.1, 0.5, 0.7, 0.3, 0.2];
        let models = [
            ClickModel::Pbm(PbmParams::with_len(6)),
            ClickModel::Ubm(UbmParams::with_len(6)),
            ClickModel::Ccm(CcmParams::informational()),
        ];
        let mut r = rng();
        for m in &models {
            for _ in 0..500 {
                let s = m.browse(&rel, &mut r).unwrap();
                assert!(s.iter().all(|x| !x.clicked || x.observed));
                if let ClickModel::Ccm(_) = m {
                    assert!(s.windows(2).all(|w| w[0].observed || !w[1].observed));
                }
            }
        }
    }

    /// Exhaustive enumeration of (observe, relevant) outcomes along the list.
    fn enumerate_marginals(model: &ClickModel, rel: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = rel.len();
        let mut obs = vec![0.0; n];
        let mut clk = vec![0.0; n];
        for mask in 0u32..(1 << (2 * n)) {
            let bit = |k: usize| mask >> k & 1 == 1;
            let mut p = 1.0;
            let mut last = 0usize;
            for i in 0..n {
                let (o, rr) = (bit(2 * i), bit(2 * i + 1));
                let po = match model {
                    ClickModel::Pbm(q) => q.observation(i + 1),
                    ClickModel::Ubm(q) => q.gamma[i][last],
                    ClickModel::Ccm(_) => unreachable!("cascade uses enumerate_ccm"),
                };
                p *= if o { po } else { 1.0 - po };
                p *= if rr { rel[i] } else { 1.0 - rel[i] };
                if o && rr {
                    last = i + 1;
                }
            }
            for i in 0..n {
                if bit(2 * i) {
                    obs[i] += p;
                    if bit(2 * i + 1) {
                        clk[i] += p;
                    }
                }
            }
        }
        (obs, clk)
    }

    /// Recursive enumeration for the cascade (continuation is its own coin).
    fn enumerate_ccm(q: &CcmParams, rel: &[f64], i: usize, p: f64, obs: &mut [f64], clk: &mut [f64]) {
        if i == rel.len() || p == 0.0 {
            return;
        }
        obs[i] += p;
        for clicked in [true, false] {
            let pc = if clicked { rel[i] } else { 1.0 - rel[i] };
            if clicked {
                clk[i] += p * pc;
            }
            let cont = if clicked {
                q.gamma2 * (1.0 - rel[i]) + q.gamma3 * rel[i]
            } else {
                q.gamma1
            };
            enumerate_ccm(q, rel, i + 1, p * pc * cont, obs, clk);
        }
    }

    #[test]
    fn closed_form_marginals_match_enumeration() {
        let rel = [0.8, 0.3, 0.55, 0.1];
        for m in [
            ClickModel::Pbm(PbmParams::with_len(4)),
            ClickModel::Ubm(UbmParams::with_len(4)),
        ] {
            let (o, c) = m.marginals(&rel).unwrap();
            let (eo, ec) = enumerate_marginals(&m, &rel);
            for i in 0..4 {
                assert!((o[i] - eo[i]).abs() < 1e-12, "{} obs rank {}", m.family(), i + 1);
                assert!((c[i] - ec[i]).abs() < 1e-12, "{} click rank {}", m.family(), i + 1);
            }
        }
        let q = CcmParams {
            gamma1: 0.6,
            gamma2: 0.3,
            gamma3: 0.2,
        };
        let (o, c) = ClickModel::Ccm(q).marginals(&rel).unwrap();
        let mut eo = vec![0.0; 4];
        let mut ec = vec![0.0; 4];
        enumerate_ccm(&q, &rel, 0, 1.0, &mut eo, &mut ec);
        for i in 0..4 {
            assert!((o[i] - eo[i]).abs() < 1e-12);
            assert!((c[i] - ec[i]).abs() < 1e-12);
        }
    }
}
