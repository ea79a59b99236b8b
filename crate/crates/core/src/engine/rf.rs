//! Result forwarding chain: tokens shift up each PE column, one hop per
//! base tick, and leave the array from row 0 in a fixed order.

use std::collections::BTreeMap;

use super::pe::{PeState, ResultToken};
use crate::error::{Error, Result};

/// Receives tokens in arrival order and keeps them by coordinate.
#[derive(Debug, Clone, Default)]
pub struct Collector {
    tokens: BTreeMap<(u32, u16, u16), i64>,
    pub arrivals: Vec<(u32, u16, u16)>,
}

impl Collector {
    pub fn deposit(&mut self, t: ResultToken) -> Result<()> {
        let key = (t.tile, t.row, t.col);
        if self.tokens.insert(key, t.value).is_some() {
            return Err(Error::ScheduleFault(format!("duplicate result token {key:?}")));
        }
        self.arrivals.push(key);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens in `(tile, row, col)` order.
    pub fn ordered(&self) -> impl Iterator<Item = ((u32, u16, u16), i64)> + '_ {
        self.tokens.iter().map(|(&k, &v)| (k, v))
    }

    pub fn get(&self, tile: u32, row: u16, col: u16) -> Option<i64> {
        self.tokens.get(&(tile, row, col)).copied()
    }
}

/// Fixed exit order of one column's results: tile by tile, rows
/// ascending. A PE may drop its result into the chain only when the
/// previous result in this order has left or sits nearer the exit.
#[derive(Debug, Clone, Default)]
pub struct ColumnOrder {
    seq: Vec<(u32, u16)>,
    next: usize,
}

impl ColumnOrder {
    pub fn new(seq: Vec<(u32, u16)>) -> Self {
        ColumnOrder { seq, next: 0 }
    }

    /// `(tile, row)` allowed to insert this base tick, if any.
    pub fn allowed(&self, pes: &[&mut PeState]) -> Option<(u32, u16)> {
        let &(tile, row) = self.seq.get(self.next)?;
        if let Some(&(pt, pr)) = self.next.checked_sub(1).map(|i| &self.seq[i]) {
            let at = pes
                .iter()
                .position(|pe| pe.rf_slot.is_some_and(|t| t.tile == pt && t.row == pr));
            if at.is_some_and(|s| s >= row as usize) {
                return None;
            }
        }
        Some((tile, row))
    }

    pub fn advance(&mut self) {
        self.next += 1;
    }

    pub fn done(&self) -> bool {
        self.next == self.seq.len()
    }
}

/// One base tick of one column (`pes` ordered top to bottom). Tokens move
/// one hop toward row 0 and leave from there. The chain is evaluated from
/// the exit backwards, so a full column advances as a shift register.
/// Returns hops made.
pub fn rf_step(pes: &mut [&mut PeState], collector: &mut Collector) -> Result<u64> {
    let mut hops = 0;
    for r in 0..pes.len() {
        if pes[r].rf_slot.is_none() {
            continue;
        }
        if r == 0 {
            collector.deposit(pes[0].rf_slot.take().expect("occupied"))?;
            hops += 1;
        } else if pes[r - 1].rf_slot.is_none() {
            pes[r - 1].rf_slot = pes[r].rf_slot.take();
            hops += 1;
        }
    }
    Ok(hops)
}
