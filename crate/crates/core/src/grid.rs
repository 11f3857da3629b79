//! Finite grid radio network: L∞ neighborhoods, the TDMA slot schedule and a
//! lockstep simulation engine.
//!
//! Nodes sit at integer coordinates `0..width × 0..height`. Protocol formulas
//! use offsets from the dealer, see [`GridSpec::offset`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EnergyLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub x: i64,
    pub y: i64,
}

impl Coord {
    pub const fn new(x: i64, y: i64) -> Self {
        Coord { x, y }
    }

    pub fn linf(self, other: Coord) -> i64 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// `|x| + |y|`.
    pub fn l1_norm(self) -> i64 {
        self.x.abs() + self.y.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub r: usize,
    pub dealer: Coord,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, r: usize) -> Result<Self> {
        Self::with_dealer(width, height, r, Coord::new(0, 0))
    }

    pub fn with_dealer(width: usize, height: usize, r: usize, dealer: Coord) -> Result<Self> {
        if r == 0 {
            return Err(Error::Config("radius must be at least 1".into()));
        }
        let w = 2 * r + 1;
        if width < w || height < w {
            return Err(Error::Config(format!(
                "grid {width}x{height} is smaller than one {w}x{w} neighborhood"
            )));
        }
        let spec = GridSpec {
            width,
            height,
            r,
            dealer,
        };
        if !spec.contains(dealer) {
            return Err(Error::Config(format!("dealer {dealer:?} outside the grid")));
        }
        Ok(spec)
    }

    /// Side of a neighborhood, 2r + 1.
    pub fn side(&self) -> usize {
        2 * self.r + 1
    }

    /// Neighborhood size (2r + 1)².
    pub fn n(&self) -> usize {
        self.side() * self.side()
    }

    pub fn node_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn index(&self, c: Coord) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.width + c.x as usize
    }

    pub fn coord(&self, index: usize) -> Coord {
        Coord::new((index % self.width) as i64, (index / self.width) as i64)
    }

    /// Position relative to the dealer.
    pub fn offset(&self, c: Coord) -> Coord {
        Coord::new(c.x - self.dealer.x, c.y - self.dealer.y)
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.node_count()).map(|i| self.coord(i))
    }

    /// Grid nodes within L∞ distance `radius` of `c`, `c` included.
    pub fn ball(&self, c: Coord, radius: usize) -> impl Iterator<Item = Coord> + '_ {
        let rad = radius as i64;
        let x0 = (c.x - rad).max(0);
        let x1 = (c.x + rad).min(self.width as i64 - 1);
        let y0 = (c.y - rad).max(0);
        let y1 = (c.y + rad).min(self.height as i64 - 1);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| Coord::new(x, y)))
    }

    /// N(c): the clipped (2r+1)×(2r+1) square centered at `c`.
    pub fn neighborhood(&self, c: Coord) -> impl Iterator<Item = Coord> + '_ {
        self.ball(c, self.r)
    }

    pub fn in_neighborhood(&self, center: Coord, c: Coord) -> bool {
        center.linf(c) <= self.r as i64
    }
}

/// Time-division schedule: slot of `(x, y)` is `(x mod w)·w + (y mod w)` with
/// `w = 2r + 1`. Nodes sharing a slot are at L∞ distance at least `w`, so no
/// receiver hears two of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchedule {
    pub side: usize,
    pub period: u64,
}

pub fn build_schedule(spec: &GridSpec) -> SlotSchedule {
    SlotSchedule {
        side: spec.side(),
        period: spec.n() as u64,
    }
}

impl SlotSchedule {
    pub fn slot(&self, c: Coord) -> u64 {
        let w = self.side as i64;
        (c.x.rem_euclid(w) * w + c.y.rem_euclid(w)) as u64
    }

    pub fn is_turn(&self, c: Coord, step: u64) -> bool {
        step % self.period == self.slot(c)
    }

    /// First step at or after `step` that belongs to `c`.
    pub fn next_turn(&self, c: Coord, step: u64) -> u64 {
        let slot = self.slot(c);
        let phase = step % self.period;
        if phase <= slot {
            step + (slot - phase)
        } else {
            step + self.period - phase + slot
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub time_step: u64,
    pub period: u64,
}

impl SimClock {
    pub fn round(&self) -> u64 {
        self.time_step / self.period
    }
}

/// Strip of width 2r+1 from the dealer to `target`: first along the y axis
/// (`x' ∈ [−r, r]`, `y' ∈ [0, y + r]`), then along the x axis
/// (`x' ∈ [−r, x]`, `y' ∈ [y − r, y + r]`). Coordinates are dealer offsets;
/// targets in other quadrants are handled by reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corridor {
    pub target: Coord,
    pub r: usize,
}

impl Corridor {
    pub fn contains(&self, c: Coord) -> bool {
        let r = self.r as i64;
        let sx = if self.target.x < 0 { -1 } else { 1 };
        let sy = if self.target.y < 0 { -1 } else { 1 };
        let (tx, ty) = (self.target.x * sx, self.target.y * sy);
        let (x, y) = (c.x * sx, c.y * sy);
        let in_y = (-r..=r).contains(&x) && (0..=ty + r).contains(&y);
        let in_x = (-r..=tx).contains(&x) && (ty - r..=ty + r).contains(&y);
        in_y || in_x
    }
}

/// Whether grid node `coord` lies in the corridor to grid node `target`.
/// Coordinates are absolute; nodes outside the grid are never members.
pub fn corridor_membership(spec: &GridSpec, target: Coord, coord: Coord) -> bool {
    if !spec.contains(coord) {
        return false;
    }
    Corridor {
        target: spec.offset(target),
        r: spec.r,
    }
    .contains(spec.offset(coord))
}

/// Per-node behavior driven by the engine, one slot at a time.
pub trait SlotProtocol {
    type Msg;

    /// Frame `node` sends in its own slot at `step`, with its size in bits.
    fn transmit(&mut self, node: usize, step: u64) -> Option<(Self::Msg, u64)>;

    /// Whether `node`'s radio is on to receive at `step`.
    fn listening(&self, node: usize, step: u64) -> bool;

    /// Delivers a frame of `bits` bits sent by `from`.
    fn receive(&mut self, node: usize, from: usize, msg: &Self::Msg, bits: u64, step: u64);

    fn end_step(&mut self, _step: u64) {}
}

/// Which ledger columns the engine charges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Fingerprint,
    Data,
}

/// The lockstep engine. Owns the clock, the fail-stop set and the ledgers;
/// node behavior comes from a [`SlotProtocol`].
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: GridSpec,
    pub schedule: SlotSchedule,
    pub clock: SimClock,
    pub phase: Phase,
    pub ledgers: Vec<EnergyLedger>,
    stopped: Vec<bool>,
    by_slot: Vec<Vec<usize>>,
    active: Vec<usize>,
    transmitted: Vec<bool>,
}

impl Network {
    pub fn new(spec: GridSpec) -> Self {
        let schedule = build_schedule(&spec);
        let mut by_slot = vec![Vec::new(); schedule.period as usize];
        for (i, c) in spec.coords().enumerate() {
            by_slot[schedule.slot(c) as usize].push(i);
        }
        Network {
            spec,
            schedule,
            clock: SimClock {
                time_step: 0,
                period: schedule.period,
            },
            phase: Phase::Fingerprint,
            ledgers: vec![EnergyLedger::default(); spec.node_count()],
            stopped: vec![false; spec.node_count()],
            by_slot,
            active: Vec::new(),
            transmitted: vec![false; spec.node_count()],
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.time_step
    }

    pub fn fail_stop(&mut self, c: Coord) {
        let i = self.spec.index(c);
        self.stopped[i] = true;
    }

    pub fn is_stopped(&self, index: usize) -> bool {
        self.stopped[index]
    }

    /// Executes one slot: the scheduled senders transmit, awake neighbors
    /// receive, ledgers are charged, and the clock advances.
    pub fn step<P: SlotProtocol>(&mut self, protocol: &mut P) -> Result<()> {
        let t = self.clock.time_step;
        let slot = (t % self.schedule.period) as usize;
        self.active.clear();
        let mut frames = Vec::new();
        for &node in &self.by_slot[slot] {
            if self.stopped[node] {
                continue;
            }
            if let Some((msg, bits)) = protocol.transmit(node, t) {
                self.active.push(node);
                frames.push((node, msg, bits));
            }
        }
        self.check_collisions(t)?;

        for (node, msg, bits) in &frames {
            self.transmitted[*node] = true;
            self.charge_sent(*node, *bits);
            let sender = self.spec.coord(*node);
            let spec = self.spec;
            for c in spec.neighborhood(sender) {
                let rx = self.spec.index(c);
                if rx == *node || self.stopped[rx] || !protocol.listening(rx, t) {
                    continue;
                }
                self.charge_listened(rx, *bits);
                protocol.receive(rx, *node, msg, *bits, t);
            }
        }

        for node in 0..self.ledgers.len() {
            if self.stopped[node] {
                continue;
            }
            let awake = self.transmitted[node] || protocol.listening(node, t);
            self.transmitted[node] = false;
            let ledger = &mut self.ledgers[node];
            match self.phase {
                Phase::Fingerprint => ledger.fp_phase_slots += 1,
                Phase::Data => ledger.data_phase_slots += 1,
            }
            if awake {
                ledger.awake_slots += 1;
                match self.phase {
                    Phase::Fingerprint => ledger.fp_awake_slots += 1,
                    Phase::Data => ledger.data_awake_slots += 1,
                }
            } else {
                ledger.sleep_slots += 1;
            }
        }
        protocol.end_step(t);
        self.clock.time_step += 1;
        Ok(())
    }

    /// Advances until the clock reads `until`.
    pub fn run_until<P: SlotProtocol>(&mut self, protocol: &mut P, until: u64) -> Result<()> {
        while self.clock.time_step < until {
            self.step(protocol)?;
        }
        Ok(())
    }

    fn check_collisions(&self, step: u64) -> Result<()> {
        let reach = 2 * self.spec.r as i64;
        for (i, &a) in self.active.iter().enumerate() {
            let ca = self.spec.coord(a);
            for &b in &self.active[i + 1..] {
                let cb = self.spec.coord(b);
                if ca.linf(cb) <= reach {
                    let receiver = Coord::new((ca.x + cb.x).div_euclid(2), (ca.y + cb.y).div_euclid(2));
                    return Err(Error::CollisionViolation { receiver, step });
                }
            }
        }
        Ok(())
    }

    fn charge_sent(&mut self, node: usize, bits: u64) {
        let l = &mut self.ledgers[node];
        l.sent_bits += bits;
        match self.phase {
            Phase::Fingerprint => l.fp_sent_bits += bits,
            Phase::Data => l.data_sent_bits += bits,
        }
    }

    fn charge_listened(&mut self, node: usize, bits: u64) {
        let l = &mut self.ledgers[node];
        l.listened_bits += bits;
        match self.phase {
            Phase::Fingerprint => l.fp_listened_bits += bits,
            Phase::Data => l.data_listened_bits += bits,
        }
    }
}
