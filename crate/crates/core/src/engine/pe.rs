//! One processing element: dynamic selection (DS), multiply-accumulate (MAC)
//! and its slot in the result-forwarding chain.

use serde::Serialize;

use super::fifo::Fifo;
use crate::ecoo::{AlignedPair, EcooTriplet, Lane};
use crate::error::{Error, Result};

/// Entry of the WF-FIFO between DS and MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfEntry {
    Pair(AlignedPair),
    /// Kernel finished: move the accumulator into the result chain.
    Flush { tile: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ResultToken {
    pub value: i64,
    pub tile: u32,
    pub row: u16,
    pub col: u16,
}

/// The streams one PE sees during one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub tile: u32,
    pub w_len: usize,
    pub f_len: usize,
    /// Forward weights to the PE below.
    pub w_forward: bool,
    /// Forward features to the PE on the right.
    pub f_forward: bool,
}

/// A register holding one element: one triplet, or both halves of a
/// 16-bit value.
#[derive(Debug, Clone, Copy)]
struct Element {
    offset: u8,
    eog: bool,
    eok: bool,
    placeholder: bool,
    lanes: [Lane; 2],
    n: u8,
    complete: bool,
}

impl Element {
    fn start(t: EcooTriplet) -> Self {
        let lane = t.lane();
        Element {
            offset: t.offset,
            eog: t.eog,
            eok: t.eok,
            placeholder: t.is_placeholder(),
            lanes: [lane, lane],
            n: 1,
            complete: !(t.tag16 && t.hi),
        }
    }

    fn finish(&mut self, t: EcooTriplet) -> Result<()> {
        if !(t.tag16 && !t.hi && t.offset == self.offset) {
            return Err(Error::ScheduleFault(format!(
                "expected the low half at offset {}, got {t:?}",
                self.offset
            )));
        }
        self.lanes[1] = t.lane();
        self.n = 2;
        self.eog = t.eog;
        self.eok = t.eok;
        self.complete = true;
        Ok(())
    }
}

/// What one DS tick did.
#[derive(Debug, Clone, Copy, Default)]
pub struct DsOutcome {
    pub fwd_w: Option<EcooTriplet>,
    pub fwd_f: Option<EcooTriplet>,
    pub active: bool,
    pub pair: bool,
    pub flush: bool,
    /// Completed a group this tick.
    pub group_done: bool,
    pub blocked: Option<&'static str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacEvent {
    Idle,
    Pair,
    Flush,
    Stall,
}

#[derive(Debug, Clone, Default)]
pub struct PeTrace {
    /// DS tick of every group completion (the both-eog push).
    pub group_ticks: Vec<u64>,
    /// Pairs consumed by the MAC, in order.
    pub pairs: Vec<AlignedPair>,
}

#[derive(Debug, Clone)]
pub struct PeState {
    pub row: usize,
    pub col: usize,
    segments: Vec<Segment>,
    seg: usize,
    w_left: usize,
    f_left: usize,
    w_reg: Option<Element>,
    f_reg: Option<Element>,
    emit_idx: u8,
    pub acc: i64,
    pub rf_slot: Option<ResultToken>,
    pub groups_completed: u64,
    pub trace: Option<PeTrace>,
}

enum Side {
    W,
    F,
}

impl PeState {
    pub fn new(row: usize, col: usize, segments: Vec<Segment>) -> Self {
        let (w_left, f_left) = segments.first().map_or((0, 0), |s| (s.w_len, s.f_len));
        PeState {
            row,
            col,
            segments,
            seg: 0,
            w_left,
            f_left,
            w_reg: None,
            f_reg: None,
            emit_idx: 0,
            acc: 0,
            rf_slot: None,
            groups_completed: 0,
            trace: None,
        }
    }

    /// No more DS work in any tile.
    pub fn ds_done(&self) -> bool {
        self.seg >= self.segments.len()
    }

    fn can_load(&self, side: &Side, fifo: &Fifo<EcooTriplet>, room: bool) -> bool {
        let Some(seg) = self.segments.get(self.seg) else {
            return false;
        };
        let (left, fwd) = match side {
            Side::W => (self.w_left, seg.w_forward),
            Side::F => (self.f_left, seg.f_forward),
        };
        left > 0 && fifo.front().is_some() && (!fwd || room)
    }

    /// Pops one triplet into the side's register and returns it if it must
    /// be forwarded.
    fn load(&mut self, side: Side, fifo: &mut Fifo<EcooTriplet>) -> Result<Option<EcooTriplet>> {
        let seg = self.segments[self.seg];
        let t = fifo.pop().expect("checked by can_load");
        let (reg, left, fwd) = match side {
            Side::W => (&mut self.w_reg, &mut self.w_left, seg.w_forward),
            Side::F => (&mut self.f_reg, &mut self.f_left, seg.f_forward),
        };
        *left -= 1;
        match reg {
            Some(e) => e.finish(t)?,
            None => *reg = Some(Element::start(t)),
        }
        Ok(fwd.then_some(t))
    }

    /// One DS tick. `w_room` / `f_room` tell whether the downstream FIFOs
    /// accept a forwarded triplet this tick. A blocked step changes nothing.
    pub fn ds_step(
        &mut self,
        tick: u64,
        w_in: &mut Fifo<EcooTriplet>,
        f_in: &mut Fifo<EcooTriplet>,
        wf: &mut Fifo<WfEntry>,
        w_room: bool,
        f_room: bool,
    ) -> Result<DsOutcome> {
        let mut out = DsOutcome::default();
        if self.ds_done() {
            return Ok(out);
        }
        if self.w_reg.is_none() && self.f_reg.is_none() && self.w_left == 0 && self.f_left == 0 {
            self.seg += 1;
            match self.segments.get(self.seg) {
                Some(s) => (self.w_left, self.f_left) = (s.w_len, s.f_len),
                None => return Ok(out),
            }
        }

        let w_partial = self.w_reg.map_or(self.w_left > 0, |e| !e.complete);
        let f_partial = self.f_reg.map_or(self.f_left > 0, |e| !e.complete);
        if w_partial || f_partial {
            if w_partial && self.can_load(&Side::W, w_in, w_room) {
                out.fwd_w = self.load(Side::W, w_in)?;
                out.active = true;
            }
            if f_partial && self.can_load(&Side::F, f_in, f_room) {
                out.fwd_f = self.load(Side::F, f_in)?;
                out.active = true;
            }
            if !out.active {
                out.blocked = Some("register load");
            }
            return Ok(out);
        }
        let (Some(w), Some(f)) = (self.w_reg, self.f_reg) else {
            return Err(Error::ScheduleFault(format!(
                "PE({},{}) register underflow with stream remaining",
                self.row, self.col
            )));
        };

        let matched = w.offset == f.offset && !w.placeholder && !f.placeholder;
        let pairs = if matched { w.n * f.n } else { 0 };
        let flush = w.eog && f.eog && w.eok;
        let entries = pairs + flush as u8;
        let (push_w, push_f) = match (w.eog, f.eog) {
            (false, false) if w.offset == f.offset => (true, true),
            (false, false) => (w.offset < f.offset, f.offset < w.offset),
            (true, false) => (false, true),
            (false, true) => (true, false),
            (true, true) => (true, true),
        };
        let last = entries == 0 || self.emit_idx + 1 == entries;

        if entries > 0 && !wf.can_push() {
            out.blocked = Some("WF-FIFO full");
            return Ok(out);
        }
        if last {
            if w.eog && f.eog {
                let kernel_end = self.w_left == 0 || self.f_left == 0;
                if w.eok != kernel_end || (kernel_end && (self.w_left, self.f_left) != (0, 0)) {
                    return Err(Error::ScheduleFault(format!(
                        "PE({},{}) weight/feature streams disagree on the kernel end",
                        self.row, self.col
                    )));
                }
            }
            let ok_w = !push_w || self.w_left == 0 || self.can_load(&Side::W, w_in, w_room);
            let ok_f = !push_f || self.f_left == 0 || self.can_load(&Side::F, f_in, f_room);
            if !(ok_w && ok_f) {
                out.blocked = Some(if ok_w { "feature push" } else { "weight push" });
                return Ok(out);
            }
        }

        if entries > 0 {
            let e = self.emit_idx;
            let entry = if e < pairs {
                out.pair = true;
                WfEntry::Pair(AlignedPair::from_lanes(
                    w.lanes[(e / f.n) as usize],
                    f.lanes[(e % f.n) as usize],
                ))
            } else {
                out.flush = true;
                WfEntry::Flush {
                    tile: self.segments[self.seg].tile,
                }
            };
            wf.push(entry);
        }
        out.active = true;
        if !last {
            self.emit_idx += 1;
            return Ok(out);
        }
        self.emit_idx = 0;
        if push_w {
            self.w_reg = None;
            if self.w_left > 0 {
                out.fwd_w = self.load(Side::W, w_in)?;
            }
        }
        if push_f {
            self.f_reg = None;
            if self.f_left > 0 {
                out.fwd_f = self.load(Side::F, f_in)?;
            }
        }
        if w.eog && f.eog {
            out.group_done = true;
            self.groups_completed += 1;
            if let Some(tr) = &mut self.trace {
                tr.group_ticks.push(tick);
            }
        }
        Ok(out)
    }

    /// One base-clock tick of the multiplier.
    /// `allowed` is the `(tile, row)` whose result may enter the chain
    /// this tick; a flush for any other result stalls.
    pub fn mac_step(&mut self, wf: &mut Fifo<WfEntry>, allowed: Option<(u32, u16)>) -> Result<MacEvent> {
        match wf.front().copied() {
            None => Ok(MacEvent::Idle),
            Some(WfEntry::Pair(p)) => {
                wf.pop();
                self.acc = self.acc.checked_add(p.product()).ok_or_else(|| {
                    Error::Overflow(format!("PE({},{}) accumulator", self.row, self.col))
                })?;
                if let Some(tr) = &mut self.trace {
                    tr.pairs.push(p);
                }
                Ok(MacEvent::Pair)
            }
            Some(WfEntry::Flush { tile }) => {
                if self.rf_slot.is_some() || allowed != Some((tile, self.row as u16)) {
                    return Ok(MacEvent::Stall);
                }
                wf.pop();
                self.rf_slot = Some(ResultToken {
                    value: self.acc,
                    tile,
                    row: self.row as u16,
                    col: self.col as u16,
                });
                self.acc = 0;
                Ok(MacEvent::Flush)
            }
        }
    }
}
