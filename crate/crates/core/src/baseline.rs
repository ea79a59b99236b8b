//! Dense output-stationary systolic array on the base clock.
//!
//! Every PE consumes one weight and one feature element per tick, zeros
//! included, with the usual `r + c` skew. Tile `t` occupies element slots
//! `[t*K, (t+1)*K)` where `K` is the receptive field padded to whole groups.
//! A PE finishing its tile drops the accumulator into the result chain in
//! the same tick; if its slot is still occupied the whole array holds for a
//! tick. The skew already makes results leave each column in row order.

use std::collections::BTreeSet;

use log::debug;

use crate::engine::{finish_report, rf_step, Collector, Counters, EngineKind, PeState, ResultToken, SimConfig, SimReport};
use crate::error::{Error, Result};
use crate::mapper::{DataflowProgram, GroupId, Source};
use crate::model::Scalar;

/// Dense element stream of one row or column, padded to whole groups.
fn dense_stream<'a>(groups: impl Iterator<Item = &'a [Scalar]>, g: usize) -> Vec<Option<Scalar>> {
    let mut out = Vec::new();
    for grp in groups {
        out.extend(grp.iter().copied().map(Some));
        out.extend(std::iter::repeat_n(None, g - grp.len()));
    }
    out
}

pub fn simulate_naive(program: &DataflowProgram, config: &SimConfig) -> Result<SimReport> {
    config.check_program(program)?;
    let (n, m) = (config.rows, config.cols);
    let g = program.group_len;
    let k_len = program.groups_per_field() * g;
    let elems_per_field = program.layer.kernel.count() as u64;
    let bytes_per_elem: u64 = if program.mixed { 2 } else { 1 };

    let mut c = Counters::default();
    let mut pes: Vec<PeState> = (0..n * m).map(|i| PeState::new(i / m, i % m, Vec::new())).collect();
    let mut collector = Collector::default();
    let expected: usize = program
        .tiles
        .iter()
        .map(|t| t.row_assignments.len() * t.col_assignments.len())
        .sum();

    // dense operand streams per tile
    let mut feat: Vec<Vec<Vec<Option<Scalar>>>> = Vec::with_capacity(program.tiles.len());
    for tile in &program.tiles {
        feat.push(
            tile.feature_directives
                .iter()
                .map(|ds| dense_stream(ds.iter().map(|d| program.group(d.group).dense.as_slice()), g))
                .collect(),
        );
        for ds in &tile.feature_directives {
            for d in ds {
                let len = program.group(d.group).dense.len() as u64;
                if config.ce_enabled && d.source == Source::Neighbor {
                    c.neighbor_reads += len;
                } else {
                    c.fb_reads += len;
                    c.fb_line_reads += 1;
                }
            }
        }
        let active = (tile.row_assignments.len() * tile.col_assignments.len()) as u64;
        c.wb_reads += tile.col_assignments.len() as u64 * elems_per_field;
        c.fifo_writes += 2 * active * elems_per_field;
        c.fifo_reads += 2 * active * elems_per_field;
    }
    let weights: Vec<Vec<Option<Scalar>>> = program
        .kernel_dense
        .iter()
        .map(|gs| dense_stream(gs.iter().map(Vec::as_slice), g))
        .collect();

    let mut step: u64 = 0;
    let mut ticks: u64 = 0;
    let horizon = program.tiles.len() as u64 * k_len as u64;
    while collector.len() < expected {
        for col in 0..m {
            let mut column: Vec<&mut PeState> = pes.iter_mut().skip(col).step_by(m).collect();
            c.rf_hops += rf_step(&mut column, &mut collector)?;
        }
        ticks += 1;
        if step >= horizon + (n + m) as u64 {
            if collector.len() < expected && pes.iter().all(|p| p.rf_slot.is_none()) {
                return Err(Error::Deadlock {
                    tick: ticks,
                    detail: format!("{} of {expected} results after all elements streamed", collector.len()),
                });
            }
            continue;
        }

        // (pe index, tile, element) active this step
        let at = |i: usize| -> Option<(usize, usize)> {
            let (r, col) = (i / m, i % m);
            let s = step.checked_sub((r + col) as u64)?;
            let t = (s / k_len as u64) as usize;
            let tile = program.tiles.get(t)?;
            (r < tile.row_assignments.len() && col < tile.col_assignments.len()).then_some((t, (s % k_len as u64) as usize))
        };
        let stall = (0..n * m).any(|i| at(i).is_some_and(|(_, e)| e + 1 == k_len) && pes[i].rf_slot.is_some());
        if stall {
            continue;
        }
        for (i, pe) in pes.iter_mut().enumerate() {
            let Some((t, e)) = at(i) else { continue };
            let (r, col) = (i / m, i % m);
            let kernel = program.tiles[t].col_assignments[col];
            if let (Some(w), Some(f)) = (weights[kernel][e], feat[t][r][e]) {
                pe.acc = pe
                    .acc
                    .checked_add(w.value() as i64 * f.value() as i64)
                    .ok_or_else(|| Error::Overflow(format!("PE({r},{col}) accumulator")))?;
                c.mac_ops += 1;
            }
            if e + 1 == k_len {
                pe.rf_slot = Some(ResultToken {
                    value: pe.acc,
                    tile: t as u32,
                    row: r as u16,
                    col: col as u16,
                });
                pe.acc = 0;
                c.flushes += 1;
            }
        }
        step += 1;
    }

    // dense buffer capacity: one copy per directive, or per distinct group with CE
    let mut fb_elems = 0u64;
    let mut last_chunk = None;
    for tile in &program.tiles {
        if last_chunk == Some(tile.row_chunk) {
            continue;
        }
        last_chunk = Some(tile.row_chunk);
        let ids = tile.feature_directives.iter().flatten().map(|d| d.group);
        let len = |id: GroupId| program.group(id).dense.len() as u64;
        fb_elems += if config.ce_enabled {
            ids.collect::<BTreeSet<_>>().into_iter().map(len).sum::<u64>()
        } else {
            ids.map(len).sum::<u64>()
        };
    }
    c.fb_bytes = fb_elems * bytes_per_elem;
    c.wb_bytes = program.kernel_dense.len() as u64 * elems_per_field * bytes_per_elem;
    c.dram_bytes = c.fb_bytes + c.wb_bytes;
    debug!("naive run: {ticks} base ticks, {} results", collector.len());
    finish_report(EngineKind::Naive, program, config, 0, ticks, c, &collector)
}
