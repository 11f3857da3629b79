//! Fault plans, their density validator, a random maximal-plan generator and
//! the plain-text scenario format.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coord, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ByzantineMode {
    /// Never transmits.
    Silent,
    /// Fresh random fingerprints and junk data in every own slot.
    GarbageFp,
    /// Commits and relays a fake fingerprint shared by all equivocators.
    EquivocateFp,
    /// Honest in the fingerprint phase, sends a different message as data.
    WrongData,
}

impl ByzantineMode {
    pub const ALL: [ByzantineMode; 4] = [
        ByzantineMode::Silent,
        ByzantineMode::GarbageFp,
        ByzantineMode::EquivocateFp,
        ByzantineMode::WrongData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ByzantineMode::Silent => "silent",
            ByzantineMode::GarbageFp => "garbagefp",
            ByzantineMode::EquivocateFp => "equivocatefp",
            ByzantineMode::WrongData => "wrongdata",
        }
    }

    /// Whether the node sends the true fingerprint and so lands in G_p.
    pub fn attests_truthfully(self) -> bool {
        self == ByzantineMode::WrongData
    }
}

impl fmt::Display for ByzantineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ByzantineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        ByzantineMode::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown byzantine mode {s:?}")))
    }
}

/// When a fail-stop node crashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrashTiming {
    /// Dead from the start; never transmits.
    Start,
    /// Takes part in the fingerprint phase, then dies before any data is sent.
    AfterFingerprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    FailStop,
    Byzantine,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "failstop" | "fail-stop" => Ok(Regime::FailStop),
            "byzantine" => Ok(Regime::Byzantine),
            _ => Err(Error::Config(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub failstop: BTreeMap<Coord, CrashTiming>,
    pub byzantine: BTreeMap<Coord, ByzantineMode>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.failstop.is_empty() && self.byzantine.is_empty()
    }

    pub fn regime(&self) -> Option<Regime> {
        match (self.failstop.is_empty(), self.byzantine.is_empty()) {
            (true, true) => None,
            (false, true) => Some(Regime::FailStop),
            (true, false) => Some(Regime::Byzantine),
            (false, false) => None,
        }
    }

    pub fn is_faulty(&self, c: Coord) -> bool {
        self.failstop.contains_key(&c) || self.byzantine.contains_key(&c)
    }
}

/// Largest t with t < (r/2)(2r+1).
pub fn t_max(r: usize) -> usize {
    (r * (2 * r + 1)).div_ceil(2) - 1
}

/// Largest t strictly below a quarter of the neighborhood, n/4.
pub fn quarter_bound(r: usize) -> usize {
    let n = (2 * r + 1) * (2 * r + 1);
    n.div_ceil(4) - 1
}

/// Per-window bound on faulty nodes for `regime`.
pub fn window_bound(spec: &GridSpec, regime: Regime) -> usize {
    match regime {
        Regime::FailStop => spec.n() / 2,
        Regime::Byzantine => t_max(spec.r),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MixedRegimes,
    WrongRegime { expected: Regime },
    FaultyDealer,
    OutsideGrid { node: Coord },
    /// Window with top-left corner `corner` holds `count` faulty nodes.
    Window { corner: Coord, count: usize, bound: usize },
    /// Correct node cut off from the dealer by fail-stopped nodes.
    Unreachable { node: Coord },
    /// More than half of a node's truthful attesters go silent in the data phase.
    StarvedStream { node: Coord, bad: usize, attesters: usize },
    /// A correct node whose neighborhood, clipped by the grid edge, holds
    /// more faulty nodes than the bound scaled to the clipped area.
    ThinBoundary { node: Coord, faulty: usize, allowed: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MixedRegimes => write!(f, "plan mixes fail-stop and byzantine nodes"),
            Violation::WrongRegime { expected } => write!(f, "plan does not match regime {expected:?}"),
            Violation::FaultyDealer => write!(f, "the dealer is faulty"),
            Violation::OutsideGrid { node } => write!(f, "faulty node ({}, {}) outside the grid", node.x, node.y),
            Violation::Window { corner, count, bound } => write!(
                f,
                "window at ({}, {}) holds {count} faulty nodes, bound {bound}",
                corner.x, corner.y
            ),
            Violation::Unreachable { node } => write!(f, "node ({}, {}) is cut off from the dealer", node.x, node.y),
            Violation::StarvedStream { node, bad, attesters } => write!(
                f,
                "node ({}, {}) has {bad} bad among {attesters} attesters",
                node.x, node.y
            ),
            Violation::ThinBoundary { node, faulty, allowed } => write!(
                f,
                "node ({}, {}) sees {faulty} faulty nodes in its clipped neighborhood, {allowed} allowed",
                node.x, node.y
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub regime: Regime,
    pub window_bound: usize,
    pub t_max: usize,
    pub quarter_bound: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::FaultPlan(lines.join("; ")))
        }
    }
}

/// Checks every full (2r+1)×(2r+1) window against the regime's bound, plus
/// the conditions the simulator needs to terminate: the dealer is correct,
/// every correct node can reach the dealer, no correct node has more bad
/// than good attesters, and with Byzantine nodes the bound holds pro rata in
/// every neighborhood clipped by the grid edge.
pub fn validate_fault_plan(plan: &FaultPlan, spec: &GridSpec, regime: Regime) -> ValidationReport {
    let mut violations = Vec::new();
    if !plan.failstop.is_empty() && !plan.byzantine.is_empty() {
        violations.push(Violation::MixedRegimes);
    } else if let Some(actual) = plan.regime() {
        if actual != regime {
            violations.push(Violation::WrongRegime { expected: regime });
        }
    }
    for &c in plan.failstop.keys().chain(plan.byzantine.keys()) {
        if !spec.contains(c) {
            violations.push(Violation::OutsideGrid { node: c });
        }
    }
    if plan.is_faulty(spec.dealer) {
        violations.push(Violation::FaultyDealer);
    }
    let bound = window_bound(spec, regime);
    let counts = FaultCounts::new(spec, plan);
    for corner in window_corners(spec) {
        let count = counts.window(corner);
        if count > bound {
            violations.push(Violation::Window { corner, count, bound });
        }
    }
    if violations.iter().all(|v| matches!(v, Violation::Window { .. })) {
        violations.extend(node_violations(spec, plan));
    }
    ValidationReport {
        regime,
        window_bound: bound,
        t_max: t_max(spec.r),
        quarter_bound: quarter_bound(spec.r),
        violations,
    }
}

fn window_corners(spec: &GridSpec) -> impl Iterator<Item = Coord> {
    let side = spec.side() as i64;
    let (w, h) = (spec.width as i64, spec.height as i64);
    (0..=h - side).flat_map(move |y| (0..=w - side).map(move |x| Coord::new(x, y)))
}

/// Faulty-node prefix sums for constant-time window counts.
struct FaultCounts {
    width: usize,
    side: i64,
    prefix: Vec<usize>,
}

impl FaultCounts {
    fn new(spec: &GridSpec, plan: &FaultPlan) -> Self {
        let (w, h) = (spec.width, spec.height);
        let mut prefix = vec![0usize; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                let here = plan.is_faulty(Coord::new(x as i64, y as i64)) as usize;
                prefix[(y + 1) * (w + 1) + x + 1] =
                    here + prefix[y * (w + 1) + x + 1] + prefix[(y + 1) * (w + 1) + x] - prefix[y * (w + 1) + x];
            }
        }
        FaultCounts {
            width: w,
            side: spec.side() as i64,
            prefix,
        }
    }

    fn window(&self, corner: Coord) -> usize {
        let stride = self.width + 1;
        let (x0, y0) = (corner.x as usize, corner.y as usize);
        let (x1, y1) = (x0 + self.side as usize, y0 + self.side as usize);
        self.prefix[y1 * stride + x1] + self.prefix[y0 * stride + x0]
            - self.prefix[y0 * stride + x1]
            - self.prefix[y1 * stride + x0]
    }
}

fn node_violations(spec: &GridSpec, plan: &FaultPlan) -> Vec<Violation> {
    let reached = reachable(spec, plan);
    let mut out = Vec::new();
    for c in spec.coords() {
        if plan.is_faulty(c) || c == spec.dealer {
            continue;
        }
        if !reached[spec.index(c)] {
            out.push(Violation::Unreachable { node: c });
            continue;
        }
        out.extend(local_violations(spec, plan, c));
    }
    out
}

/// Nodes reachable from the dealer through nodes alive in the fingerprint phase.
fn reachable(spec: &GridSpec, plan: &FaultPlan) -> Vec<bool> {
    let dead = |c: Coord| plan.failstop.get(&c) == Some(&CrashTiming::Start);
    let mut seen = vec![false; spec.node_count()];
    let mut queue = VecDeque::from([spec.dealer]);
    seen[spec.index(spec.dealer)] = true;
    while let Some(c) = queue.pop_front() {
        for nb in spec.neighborhood(c) {
            let i = spec.index(nb);
            if !seen[i] && !dead(nb) {
                seen[i] = true;
                queue.push_back(nb);
            }
        }
    }
    seen
}

/// Attester and boundary rules for one correct node.
fn local_violations(spec: &GridSpec, plan: &FaultPlan, c: Coord) -> Vec<Violation> {
    let mut out = Vec::new();
    if !plan.byzantine.is_empty() {
        let visible = spec.neighborhood(c).count();
        let faulty = spec.neighborhood(c).filter(|&nb| plan.is_faulty(nb)).count();
        let allowed = (t_max(spec.r) * visible).div_ceil(spec.n());
        if faulty > allowed {
            out.push(Violation::ThinBoundary { node: c, faulty, allowed });
        }
    }
    if spec.in_neighborhood(spec.dealer, c) {
        return out;
    }
    let mut attesters = 0;
    let mut bad = 0;
    for nb in spec.neighborhood(c).filter(|&nb| nb != c) {
        match (plan.failstop.get(&nb), plan.byzantine.get(&nb)) {
            (Some(CrashTiming::Start), _) | (_, Some(ByzantineMode::Silent | ByzantineMode::GarbageFp)) => {}
            (_, Some(ByzantineMode::EquivocateFp)) => {}
            (Some(CrashTiming::AfterFingerprint), _) | (_, Some(ByzantineMode::WrongData)) => {
                attesters += 1;
                bad += 1;
            }
            (None, None) => attesters += 1,
        }
    }
    if attesters == 0 || bad > attesters / 2 {
        out.push(Violation::StarvedStream {
            node: c,
            bad,
            attesters,
        });
    }
    out
}

/// Random maximal plan: visits nodes in random order and adds each one that
/// keeps the plan valid. `make` decides what kind of fault a node becomes.
pub fn generate_max_plan(
    spec: &GridSpec,
    regime: Regime,
    seed: u64,
    mut make: impl FnMut(&mut ChaCha8Rng) -> FaultKind,
) -> FaultPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<Coord> = spec.coords().filter(|&c| c != spec.dealer).collect();
    order.shuffle(&mut rng);
    let bound = window_bound(spec, regime);
    let side = spec.side() as i64;
    let (w, h) = (spec.width as i64, spec.height as i64);
    let corners_w = (w - side + 1) as usize;
    let mut window = vec![0usize; corners_w * (h - side + 1) as usize];
    let mut plan = FaultPlan::default();
    for c in order {
        let xs = (c.x - side + 1).max(0)..=c.x.min(w - side);
        let ys = (c.y - side + 1).max(0)..=c.y.min(h - side);
        let full = ys
            .clone()
            .any(|y| xs.clone().any(|x| window[y as usize * corners_w + x as usize] >= bound));
        if full {
            continue;
        }
        let kind = make(&mut rng);
        kind.insert(&mut plan, c);
        let local_ok = node_violations_near(spec, &plan, c);
        if !local_ok {
            kind.remove(&mut plan, c);
            continue;
        }
        for y in ys {
            for x in xs.clone() {
                window[y as usize * corners_w + x as usize] += 1;
            }
        }
    }
    plan
}

fn node_violations_near(spec: &GridSpec, plan: &FaultPlan, c: Coord) -> bool {
    // only a start crash can cut paths; the other rules only look r around `c`
    if plan.failstop.get(&c) == Some(&CrashTiming::Start) {
        let reached = reachable(spec, plan);
        let cut = spec
            .coords()
            .any(|q| !plan.is_faulty(q) && !reached[spec.index(q)]);
        if cut {
            return false;
        }
    }
    spec.ball(c, spec.r)
        .filter(|&q| !plan.is_faulty(q) && q != spec.dealer)
        .all(|q| local_violations(spec, plan, q).is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    Crash(CrashTiming),
    Byzantine(ByzantineMode),
}

impl FaultKind {
    fn insert(self, plan: &mut FaultPlan, c: Coord) {
        match self {
            FaultKind::Crash(t) => {
                plan.failstop.insert(c, t);
            }
            FaultKind::Byzantine(m) => {
                plan.byzantine.insert(c, m);
            }
        }
    }

    fn remove(self, plan: &mut FaultPlan, c: Coord) {
        plan.failstop.remove(&c);
        plan.byzantine.remove(&c);
    }
}

/// Crashes from the start, or after the fingerprint phase with probability `late`.
pub fn crash_maker(late: f64) -> impl FnMut(&mut ChaCha8Rng) -> FaultKind {
    move |rng| {
        if rng.gen_bool(late) {
            FaultKind::Crash(CrashTiming::AfterFingerprint)
        } else {
            FaultKind::Crash(CrashTiming::Start)
        }
    }
}

/// A grid, its fault plan and the run seed, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: GridSpec,
    pub seed: u64,
    pub faults: FaultPlan,
}

fn scenario_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Scenario { line, msg: msg.into() }
}

fn parse_field<T: FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| scenario_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| scenario_err(line, format!("bad {what} {tok:?}")))
}

/// Parses `grid W H R SEED`, then any number of `failstop X Y [late]`,
/// `byzantine X Y MODE` and `dealer X Y` lines. `#` starts a comment.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut header: Option<(usize, usize, usize, u64)> = None;
    let mut dealer = Coord::new(0, 0);
    let mut faults = FaultPlan::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let keyword = toks.next().unwrap_or_default();
        if header.is_none() && keyword != "grid" {
            return Err(scenario_err(line, "first line must be `grid W H R SEED`"));
        }
        match keyword {
            "grid" => {
                if header.is_some() {
                    return Err(scenario_err(line, "duplicate grid line"));
                }
                header = Some((
                    parse_field(toks.next(), line, "width")?,
                    parse_field(toks.next(), line, "height")?,
                    parse_field(toks.next(), line, "radius")?,
                    parse_field(toks.next(), line, "seed")?,
                ));
            }
            "dealer" => {
                dealer = Coord::new(parse_field(toks.next(), line, "x")?, parse_field(toks.next(), line, "y")?);
            }
            "failstop" => {
                let c = Coord::new(parse_field(toks.next(), line, "x")?, parse_field(toks.next(), line, "y")?);
                let timing = match toks.next() {
                    None => CrashTiming::Start,
                    Some("late") => CrashTiming::AfterFingerprint,
                    Some(t) => return Err(scenario_err(line, format!("unknown crash timing {t:?}"))),
                };
                faults.failstop.insert(c, timing);
            }
            "byzantine" => {
                let c = Coord::new(parse_field(toks.next(), line, "x")?, parse_field(toks.next(), line, "y")?);
                let mode_tok = toks.next().ok_or_else(|| scenario_err(line, "missing mode"))?;
                let mode = mode_tok
                    .parse()
                    .map_err(|_| scenario_err(line, format!("unknown byzantine mode {mode_tok:?}")))?;
                faults.byzantine.insert(c, mode);
            }
            other => return Err(scenario_err(line, format!("unknown directive {other:?}"))),
        }
        if let Some(extra) = toks.next() {
            return Err(scenario_err(line, format!("unexpected token {extra:?}")));
        }
    }
    let (w, h, r, seed) = header.ok_or_else(|| scenario_err(0, "empty scenario"))?;
    let spec = GridSpec::with_dealer(w, h, r, dealer).map_err(|e| scenario_err(1, e.to_string()))?;
    Ok(Scenario { spec, seed, faults })
}

pub fn format_scenario(s: &Scenario) -> String {
    let mut out = format!("grid {} {} {} {}\n", s.spec.width, s.spec.height, s.spec.r, s.seed);
    if s.spec.dealer != Coord::new(0, 0) {
        out += &format!("dealer {} {}\n", s.spec.dealer.x, s.spec.dealer.y);
    }
    for (c, t) in &s.faults.failstop {
        let suffix = if *t == CrashTiming::AfterFingerprint { " late" } else { "" };
        out += &format!("failstop {} {}{suffix}\n", c.x, c.y);
    }
    for (c, m) in &s.faults.byzantine {
        out += &format!("byzantine {} {} {m}\n", c.x, c.y);
    }
    out
}
