//! Exact checks of the probabilistic identities behind the estimator, by
//! enumeration over small discrete worlds. Nothing here samples and nothing
//! here reuses the closed forms of [`crate::info`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual accepted as exact equality.
pub const EXACT_TOL: f64 = 1e-12;

/// Conditionals of one context value `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub p_x: f64,
    /// `P(O = 1 | x)`
    pub p_o1: f64,
    /// `[P(R = 1 | O = 0, x), P(R = 1 | O = 1, x)]`
    pub p_r_given_o: [f64; 2],
}

/// Finite joint law over `(X, R, O, C)` with `C = R * O`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteWorld {
    pub points: Vec<WorldPoint>,
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl DiscreteWorld {
    pub fn new(points: Vec<WorldPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("world without context values".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(is_prob(p.p_x) && is_prob(p.p_o1) && p.p_r_given_o.iter().all(|&v| is_prob(v))) {
                return Err(Error::Domain(format!("world point {i} holds a value outside [0, 1]")));
            }
        }
        let mass: f64 = points.iter().map(|p| p.p_x).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("P(X) sums to {mass}")));
        }
        Ok(Self { points })
    }

    /// `n` context values with random conditionals; each point is made
    /// conditionally independent with probability `tie_rate`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, tie_rate: f64) -> Self {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut points: Vec<WorldPoint> = raw
            .iter()
            .map(|&w| {
                let b = rng.random::<f64>();
                let a = if rng.random_bool(tie_rate) {
                    b
                } else {
                    rng.random::<f64>()
                };
                WorldPoint {
                    p_x: w / total,
                    p_o1: rng.random::<f64>(),
                    p_r_given_o: [b, a],
                }
            })
            .collect();
        // absorb rounding so the masses sum to one
        let mass: f64 = points.iter().map(|p| p.p_x).sum();
        points[0].p_x += 1.0 - mass;
        Self { points }
    }

    /// `P(X = x, R = r, O = o)`.
    pub fn joint(&self, x: usize, r: bool, o: bool) -> f64 {
        let p = &self.points[x];
        let po = if o { p.p_o1 } else { 1.0 - p.p_o1 };
        let pr1 = p.p_r_given_o[usize::from(o)];
        let pr = if r { pr1 } else { 1.0 - pr1 };
        p.p_x * po * pr
    }

    /// `P(X = x, R = r, O = o, C = c)`; zero unless `c = r o`.
    pub fn joint_with_click(&self, x: usize, r: bool, o: bool, c: bool) -> f64 {
        if c == (r && o) {
            self.joint(x, r, o)
        } else {
            0.0
        }
    }

    fn conditional_table(&self, x: usize) -> [[f64; 2]; 2] {
        let px = self.points[x].p_x;
        let mut t = [[0.0; 2]; 2];
        for (r, row) in t.iter_mut().enumerate() {
            for (o, cell) in row.iter_mut().enumerate() {
                *cell = if px > 0.0 {
                    self.joint(x, r == 1, o == 1) / px
                } else {
                    0.0
                };
            }
        }
        t
    }
}

/// `I(R; O | X = x)` as `sum_{r,o} P(r,o|x) ln[P(r,o|x) / (P(r|x) P(o|x))]`.
pub fn brute_force_cmi(world: &DiscreteWorld, x: usize) -> f64 {
    let t = world.conditional_table(x);
    let pr = [t[0][0] + t[0][1], t[1][0] + t[1][1]];
    let po = [t[0][0] + t[1][0], t[0][1] + t[1][1]];
    let mut s = 0.0;
    for r in 0..2 {
        for o in 0..2 {
            let p = t[r][o];
            if p > 0.0 {
                s += p * (p / (pr[r] * po[o])).ln();
            }
        }
    }
    s.max(0.0)
}

/// Single-point world for evaluating [`brute_force_cmi`] on a head triple.
pub fn point_world(p_r_given_o1: f64, p_r_given_o0: f64, p_o1: f64) -> DiscreteWorld {
    DiscreteWorld {
        points: vec![WorldPoint {
            p_x: 1.0,
            p_o1,
            p_r_given_o: [p_r_given_o0, p_r_given_o1],
        }],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceRow {
    pub x: usize,
    /// `max_{r,o} |P(r,o|x) - P(r|x) P(o|x)|`
    pub factorization_gap: f64,
    pub cmi: f64,
    pub delta_ci: f64,
    pub independent: bool,
    /// Whether the three zero tests classify `x` the same way.
    pub agree: bool,
}

/// The three equivalent statements at every `x`, each tested for zero at
/// `tol`.
pub fn check_independence(world: &DiscreteWorld, tol: f64) -> Result<Vec<IndependenceRow>> {
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    Ok((0..world.points.len())
        .map(|x| {
            let t = world.conditional_table(x);
            let pr = [t[0][0] + t[0][1], t[1][0] + t[1][1]];
            let po = [t[0][0] + t[1][0], t[0][1] + t[1][1]];
            let mut gap: f64 = 0.0;
            for r in 0..2 {
                for o in 0..2 {
                    gap = gap.max((t[r][o] - pr[r] * po[o]).abs());
                }
            }
            let p = &world.points[x];
            let delta_ci = (p.p_r_given_o[1] - p.p_r_given_o[0]).abs();
            let cmi = brute_force_cmi(world, x);
            let zeros = [gap <= tol, cmi <= tol, delta_ci <= tol];
            IndependenceRow {
                x,
                factorization_gap: gap,
                cmi,
                delta_ci,
                independent: zeros[2],
                agree: zeros.iter().all(|&z| z == zeros[0]),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    /// `max_x |P(C=1|x) - P(R=1|x) P(O=1|x)|`
    pub max_residual: f64,
    /// Whether `P(R | O = 1, x) = P(R | O = 0, x)` wherever `O` varies.
    pub independent: bool,
    /// `max_residual <= 1e-12` exactly when the world is independent.
    pub consistent: bool,
}

pub fn verify_click_factorization(world: &DiscreteWorld) -> FactorizationReport {
    let mut max_residual: f64 = 0.0;
    let mut independent = true;
    for (x, p) in world.points.iter().enumerate() {
        if p.p_x == 0.0 {
            continue;
        }
        let mut click = 0.0;
        let mut rel = 0.0;
        let mut obs = 0.0;
        for r in [false, true] {
            for o in [false, true] {
                for c in [false, true] {
                    let j = world.joint_with_click(x, r, o, c) / p.p_x;
                    click += if c { j } else { 0.0 };
                    rel += if r { j } else { 0.0 };
                    obs += if o { j } else { 0.0 };
                }
            }
        }
        max_residual = max_residual.max((click - rel * obs).abs());
        let degenerate = p.p_o1 == 0.0 || p.p_o1 == 1.0;
        if !degenerate && p.p_r_given_o[0] != p.p_r_given_o[1] {
            independent = false;
        }
    }
    FactorizationReport {
        max_residual,
        independent,
        consistent: (max_residual <= EXACT_TOL) == independent,
    }
}

/// History-augmented world: per `x`, a joint table over the current
/// relevance `R`, the event that earlier impressions of the item were
/// relevant (`Rh`) and the event that they were observed (`Oh`). The event
/// of earlier clicks is `Ch = Rh and Oh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWorld {
    pub p_x: Vec<f64>,
    /// `table[x][r][rh][oh]`, each `x` slice summing to one.
    pub table: Vec<[[[f64; 2]; 2]; 2]>,
}

impl HistoryWorld {
    /// Random world with `Rh` and `Oh` independent given `R`, and one of
    /// them independent of `R`, so earlier clicks factorize given `x`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut p_x: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mass: f64 = p_x.iter().sum();
        p_x[0] += 1.0 - mass;
        let table = (0..n)
            .map(|_| {
                let pr = rng.random_range(0.05..0.95);
                let mut h: [f64; 2] = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
                let mut g: [f64; 2] = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
                if rng.random_bool(0.5) {
                    h[1] = h[0];
                } else {
                    g[1] = g[0];
                }
                Self::slice(pr, h, g)
            })
            .collect();
        Self { p_x, table }
    }

    /// Joint slice from `P(R = 1)`, `P(Rh = 1 | R)` and `P(Oh = 1 | R)` with
    /// `Rh` and `Oh` independent given `R`.
    pub fn slice(p_r: f64, p_rh: [f64; 2], p_oh: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let mut t = [[[0.0; 2]; 2]; 2];
        for r in 0..2 {
            let w = if r == 1 { p_r } else { 1.0 - p_r };
            for rh in 0..2 {
                let a = if rh == 1 { p_rh[r] } else { 1.0 - p_rh[r] };
                for oh in 0..2 {
                    let b = if oh == 1 { p_oh[r] } else { 1.0 - p_oh[r] };
                    t[r][rh][oh] = w * a * b;
                }
            }
        }
        t
    }

    fn prob(&self, x: usize, pred: impl Fn(usize, usize, usize) -> bool) -> f64 {
        let mut s = 0.0;
        for r in 0..2 {
            for rh in 0..2 {
                for oh in 0..2 {
                    if pred(r, rh, oh) {
                        s += self.table[x][r][rh][oh];
                    }
                }
            }
        }
        s
    }

    /// Checks that earlier clicks factorize into earlier relevance times
    /// earlier observation, both given `x` and given `(R, x)`.
    pub fn check_click_history(&self) -> Result<()> {
        for x in 0..self.table.len() {
            let total = self.prob(x, |_, _, _| true);
            if (total - 1.0).abs() > EXACT_TOL {
                return Err(Error::Domain(format!("history table at x={x} sums to {total}")));
            }
            let ch = self.prob(x, |_, rh, oh| rh == 1 && oh == 1);
            let rh = self.prob(x, |_, rh, _| rh == 1);
            let oh = self.prob(x, |_, _, oh| oh == 1);
            if (ch - rh * oh).abs() > EXACT_TOL {
                return Err(Error::Domain(format!(
                    "x={x}: P(Ch|x) = {ch} but P(Rh|x) P(Oh|x) = {}",
                    rh * oh
                )));
            }
            for r in 0..2 {
                let pr = self.prob(x, |rr, _, _| rr == r);
                if pr == 0.0 {
                    continue;
                }
                let ch = self.prob(x, |rr, rh, oh| rr == r && rh == 1 && oh == 1) / pr;
                let rh = self.prob(x, |rr, rh, _| rr == r && rh == 1) / pr;
                let oh = self.prob(x, |rr, _, oh| rr == r && oh == 1) / pr;
                if (ch - rh * oh).abs() > EXACT_TOL {
                    return Err(Error::Domain(format!(
                        "x={x}, R={r}: earlier clicks do not factorize given relevance"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `max |P(R|Ch,x) - P(R|Oh,x) / P(R|x) * P(R|Rh,x)|` over `x` and `R`.
pub fn verify_popularity_identity(world: &HistoryWorld) -> Result<f64> {
    world.check_click_history()?;
    let mut worst: f64 = 0.0;
    for x in 0..world.table.len() {
        let ch = world.prob(x, |_, rh, oh| rh == 1 && oh == 1);
        let rh = world.prob(x, |_, rh, _| rh == 1);
        let oh = world.prob(x, |_, _, oh| oh == 1);
        if ch == 0.0 || rh == 0.0 || oh == 0.0 {
            continue;
        }
        for r in 0..2 {
            let pr = world.prob(x, |rr, _, _| rr == r);
            let lhs = world.prob(x, |rr, rh, oh| rr == r && rh == 1 && oh == 1) / ch;
            let given_oh = world.prob(x, |rr, _, oh| rr == r && oh == 1) / oh;
            let given_rh = world.prob(x, |rr, rh, _| rr == r && rh == 1) / rh;
            let rhs = given_oh / pr * given_rh;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpwReport {
    /// Expected propensity-weighted click risk.
    pub lhs: f64,
    /// Expected risk against relevance drawn from `P(R | x)`.
    pub rhs: f64,
    pub residual: f64,
}

/// Exact expectation of the propensity-weighted click risk against the
/// relevance risk, for fixed per-point scores.
///
/// The pointwise loss must vanish on unclicked impressions, so that
/// `Delta(f, c) = o Delta(f, r)`.
pub fn verify_ipw_unbiasedness(
    world: &DiscreteWorld,
    scores: &[f64],
    loss: impl Fn(f64, bool) -> f64,
) -> Result<IpwReport> {
    if scores.len() != world.points.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} context values",
            scores.len(),
            world.points.len()
        )));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (x, (p, &s)) in world.points.iter().zip(scores).enumerate() {
        if p.p_o1 < crate::training::PROPENSITY_FLOOR {
            return Err(Error::Domain(format!(
                "x={x}: P(O=1|x) = {} is not bounded away from zero",
                p.p_o1
            )));
        }
        if loss(s, false) != 0.0 {
            return Err(Error::Domain(
                "pointwise loss must be zero on unclicked impressions".into(),
            ));
        }
        for r in [false, true] {
            for o in [false, true] {
                for c in [false, true] {
                    lhs += world.joint_with_click(x, r, o, c) * loss(s, c) / p.p_o1;
                }
            }
        }
        let rel = world.joint(x, true, true) + world.joint(x, true, false);
        rhs += rel * loss(s, true) + (p.p_x - rel) * loss(s, false);
    }
    Ok(IpwReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Case counts of [`oracle_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSizes {
    pub cmi_triples: usize,
    pub independence_worlds: usize,
    pub factorization_worlds: usize,
    pub ipw_worlds: usize,
    pub history_worlds: usize,
    pub points_per_world: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            cmi_triples: 1_000_000,
            independence_worlds: 1000,
            factorization_worlds: 1000,
            ipw_worlds: 100,
            history_worlds: 100,
            points_per_world: 4,
        }
    }
}

/// Outcome of one identity over all its cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest residual seen, or the largest offending value for
    /// classification checks.
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(identity: &str, cases: usize, failures: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            identity: identity.into(),
            cases,
            failures,
            worst,
            tolerance,
            pass: failures == 0,
        }
    }
}

/// Zero threshold of the CMI in the equivalence check.
pub const CMI_ZERO_TOL: f64 = 1e-9;
/// Zero threshold of the conditional-independence gap.
pub const DELTA_CI_ZERO_TOL: f64 = 1e-6;

fn random_ipw_world<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DiscreteWorld {
    loop {
        let w = DiscreteWorld::random(rng, n, 1.0);
        if w.points.iter().all(|p| p.p_o1 >= crate::training::PROPENSITY_FLOOR) {
            return w;
        }
    }
}

/// Runs every identity on seeded random cases.
///
/// Head triples are drawn uniformly from the clamped range, a quarter of
/// them with tied relevance conditionals.
pub fn oracle_suite(seed: u64, sizes: SuiteSizes) -> Result<Vec<IdentityCheck>> {
    use crate::info::{cmi_pointwise, PointwiseHeads, PROB_CLAMP};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let (lo, hi) = (PROB_CLAMP, 1.0 - PROB_CLAMP);
    let (mut negative, mut lowest) = (0, f64::INFINITY);
    let mut worst_gap: f64 = 0.0;
    let (mut disagree, mut worst_disagree) = (0, 0.0f64);
    for _ in 0..sizes.cmi_triples {
        let a = rng.random_range(lo..=hi);
        let b = if rng.random_bool(0.25) {
            a
        } else {
            rng.random_range(lo..=hi)
        };
        let q = rng.random_range(lo..=hi);
        let fast = cmi_pointwise(PointwiseHeads::new(a, b, q));
        let exact = brute_force_cmi(&point_world(a, b, q), 0);
        if fast < 0.0 {
            negative += 1;
        }
        lowest = lowest.min(fast);
        worst_gap = worst_gap.max((fast - exact).abs());
        let delta = (a - b).abs();
        if (fast <= CMI_ZERO_TOL) != (delta <= DELTA_CI_ZERO_TOL) {
            disagree += 1;
            worst_disagree = worst_disagree.max(delta);
        }
    }
    let n = sizes.cmi_triples;
    out.push(IdentityCheck::new(
        "cmi_nonnegative",
        n,
        negative,
        lowest.min(0.0).abs(),
        0.0,
    ));
    let mut agree = IdentityCheck::new("cmi_matches_enumeration", n, 0, worst_gap, EXACT_TOL);
    agree.pass = worst_gap <= EXACT_TOL;
    agree.failures = usize::from(!agree.pass);
    out.push(agree);
    out.push(IdentityCheck::new(
        "cmi_zero_iff_delta_ci_zero",
        n,
        disagree,
        worst_disagree,
        CMI_ZERO_TOL,
    ));

    let (mut rows, mut bad, mut worst) = (0, 0, 0.0f64);
    for _ in 0..sizes.independence_worlds {
        let w = DiscreteWorld::random(&mut rng, sizes.points_per_world, 0.5);
        for r in check_independence(&w, CMI_ZERO_TOL)? {
            rows += 1;
            if !r.agree {
                bad += 1;
                worst = worst.max(r.delta_ci);
            }
        }
    }
    out.push(IdentityCheck::new(
        "independence_three_way_agreement",
        rows,
        bad,
        worst,
        CMI_ZERO_TOL,
    ));

    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..sizes.factorization_worlds {
        let w = DiscreteWorld::random(&mut rng, sizes.points_per_world, 0.5);
        let r = verify_click_factorization(&w);
        if r.independent {
            worst = worst.max(r.max_residual);
        }
        bad += usize::from(!r.consistent);
    }
    out.push(IdentityCheck::new(
        "click_factorization",
        sizes.factorization_worlds,
        bad,
        worst,
        EXACT_TOL,
    ));

    let (mut bad, mut worst) = (0, 0.0f64);
    let nll = |s: f64, c: bool| if c { -s.ln() } else { 0.0 };
    for _ in 0..sizes.ipw_worlds {
        let w = random_ipw_world(&mut rng, sizes.points_per_world);
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let scores: Vec<f64> = w
            .points
            .iter()
            .map(|_| {
                let z: f64 = bias + weights.iter().map(|wi| wi * rng.random_range(-1.0..1.0)).sum::<f64>();
                1.0 / (1.0 + (-z).exp())
            })
            .collect();
        let r = verify_ipw_unbiasedness(&w, &scores, nll)?;
        worst = worst.max(r.residual);
        bad += usize::from(r.residual > EXACT_TOL);
    }
    out.push(IdentityCheck::new(
        "ipw_unbiasedness",
        sizes.ipw_worlds,
        bad,
        worst,
        EXACT_TOL,
    ));

    let (mut bad, mut worst) = (0, 0.0f64);
    for _ in 0..sizes.history_worlds {
        let r = verify_popularity_identity(&HistoryWorld::random(&mut rng, sizes.points_per_world))?;
        worst = worst.max(r);
        bad += usize::from(r > EXACT_TOL);
    }
    out.push(IdentityCheck::new(
        "popularity_identity",
        sizes.history_worlds,
        bad,
        worst,
        EXACT_TOL,
    ));

    let mut accepted = 0;
    for _ in 0..sizes.history_worlds {
        let h = [rng.random_range(0.05..0.45), rng.random_range(0.55..0.95)];
        let g = [rng.random_range(0.05..0.45), rng.random_range(0.55..0.95)];
        let w = HistoryWorld {
            p_x: vec![1.0],
            table: vec![HistoryWorld::slice(rng.random_range(0.05..0.95), h, g)],
        };
        accepted += usize::from(verify_popularity_identity(&w).is_ok());
    }
    out.push(IdentityCheck::new(
        "popularity_precondition",
        sizes.history_worlds,
        accepted,
        0.0,
        EXACT_TOL,
    ));
    Ok(out)
}
