use std::borrow::Cow;

use log::{debug, trace};

use super::ce::{FeatureFeed, FeedCounters, WeightFeed};
use super::fifo::Fifo;
use super::pe::{MacEvent, PeState, PeTrace, Segment, WfEntry};
use super::rf::{rf_step, Collector, ColumnOrder};
use super::{finish_report, Counters, EngineKind, SimConfig, SimReport};
use crate::ecoo::EcooTriplet;
use crate::error::{Error, Result};
use crate::mapper::{footprint, schedule_ce, DataflowProgram};

/// Single-threaded, deterministic run of one program.
pub struct Simulator<'a> {
    program: Cow<'a, DataflowProgram>,
    config: SimConfig,
    pes: Vec<PeState>,
    trace: bool,
}

/// Runs `program` to completion.
pub fn simulate(program: &DataflowProgram, config: &SimConfig) -> Result<SimReport> {
    Simulator::new(program, config)?.run()
}

impl<'a> Simulator<'a> {
    pub fn new(program: &'a DataflowProgram, config: &SimConfig) -> Result<Self> {
        config.check_program(program)?;
        let program = if config.ce_enabled && !program.ce_scheduled {
            Cow::Owned(schedule_ce(program.clone())?)
        } else {
            Cow::Borrowed(program)
        };
        let (n, m) = (config.rows, config.cols);
        let mut segs = vec![Vec::new(); n * m];
        for (t, tile) in program.tiles.iter().enumerate() {
            let (rt, ct) = (tile.row_assignments.len(), tile.col_assignments.len());
            for r in 0..rt {
                let f_len = tile.feature_directives[r]
                    .iter()
                    .map(|d| program.group(d.group).triplets.len())
                    .sum();
                for c in 0..ct {
                    segs[r * m + c].push(Segment {
                        tile: t as u32,
                        w_len: program.kernel_streams[tile.col_assignments[c]].len(),
                        f_len,
                        w_forward: r + 1 < rt,
                        f_forward: c + 1 < ct,
                    });
                }
            }
        }
        let pes = segs
            .into_iter()
            .enumerate()
            .map(|(i, s)| PeState::new(i / m, i % m, s))
            .collect();
        Ok(Simulator {
            program,
            config: config.clone(),
            pes,
            trace: false,
        })
    }

    /// Records per-PE group completion ticks and consumed pairs.
    pub fn enable_trace(&mut self) {
        self.trace = true;
        for pe in &mut self.pes {
            pe.trace = Some(PeTrace::default());
        }
    }

    pub fn pe_trace(&self, row: usize, col: usize) -> Option<&PeTrace> {
        self.pes.get(row * self.config.cols + col)?.trace.as_ref()
    }

    pub fn run(&mut self) -> Result<SimReport> {
        let program: &DataflowProgram = &self.program;
        let cfg = &self.config;
        let (n, m) = (cfg.rows, cfg.cols);
        let r_ratio = cfg.ratio as u64;
        let expected: usize = program
            .tiles
            .iter()
            .map(|t| t.row_assignments.len() * t.col_assignments.len())
            .sum();

        let mut w_fifos: Vec<Fifo<EcooTriplet>> = (0..n * m).map(|_| Fifo::new(cfg.w_depth.0)).collect();
        let mut f_fifos: Vec<Fifo<EcooTriplet>> = (0..n * m).map(|_| Fifo::new(cfg.f_depth.0)).collect();
        let mut wf_fifos: Vec<Fifo<WfEntry>> = (0..n * m).map(|_| Fifo::new(cfg.wf_depth.0)).collect();
        let mut ffeed = FeatureFeed::new(program, n, cfg.ce_enabled);
        let mut wfeed = WeightFeed::new(program, m);
        let mut feed = FeedCounters::default();
        let mut collector = Collector::default();
        let mut orders = column_orders(program, n, m);
        let mut c = Counters::default();

        let mut tick: u64 = 0;
        let mut idle_ticks = 0u64;
        let mut w_room = vec![false; n * m];
        let mut f_room = vec![false; n * m];
        while collector.len() < expected {
            let mut progress = false;
            {
                let mut heads: Vec<&mut Fifo<EcooTriplet>> = w_fifos.iter_mut().take(m).collect();
                progress |= wfeed.step(&mut heads, &mut feed);
            }
            {
                let mut heads: Vec<&mut Fifo<EcooTriplet>> = f_fifos.iter_mut().step_by(m).collect();
                progress |= ffeed.step(&mut heads, &mut feed)?;
            }

            for i in 0..n * m {
                let (r, col) = (i / m, i % m);
                w_room[i] = r + 1 < n && w_fifos[i + m].can_push();
                f_room[i] = col + 1 < m && f_fifos[i + 1].can_push();
            }
            let mut blocked = None;
            for i in 0..n * m {
                let o = self.pes[i].ds_step(
                    tick,
                    &mut w_fifos[i],
                    &mut f_fifos[i],
                    &mut wf_fifos[i],
                    w_room[i],
                    f_room[i],
                )?;
                if let Some(t) = o.fwd_w {
                    w_fifos[i + m].push(t);
                }
                if let Some(t) = o.fwd_f {
                    f_fifos[i + 1].push(t);
                }
                if o.active {
                    c.ds_active_ticks += 1;
                    progress = true;
                }
                c.pairs_emitted += o.pair as u64;
                c.flushes += o.flush as u64;
                if blocked.is_none() {
                    blocked = o.blocked.map(|b| (i, b));
                }
            }

            if (tick + 1).is_multiple_of(r_ratio) {
                for col in 0..m {
                    let mut column: Vec<&mut PeState> = self.pes.iter_mut().skip(col).step_by(m).collect();
                    let hops = rf_step(&mut column, &mut collector)?;
                    c.rf_hops += hops;
                    progress |= hops > 0;
                }
                for col in 0..m {
                    let column: Vec<&mut PeState> = self.pes.iter_mut().skip(col).step_by(m).collect();
                    let allowed = orders[col].allowed(&column);
                    for (r, pe) in column.into_iter().enumerate() {
                        match pe.mac_step(&mut wf_fifos[r * m + col], allowed)? {
                            MacEvent::Pair => c.mac_ops += 1,
                            MacEvent::Flush => {
                                c.mac_ops += 1;
                                orders[col].advance();
                            }
                            MacEvent::Stall | MacEvent::Idle => continue,
                        }
                        progress = true;
                    }
                }
            }

            for f in w_fifos.iter_mut().chain(f_fifos.iter_mut()) {
                f.commit();
            }
            for f in wf_fifos.iter_mut() {
                f.commit();
            }
            progress |= ffeed.end_tick();
            tick += 1;

            if progress {
                idle_ticks = 0;
            } else {
                idle_ticks += 1;
                if idle_ticks > r_ratio {
                    let detail = match blocked {
                        Some((i, what)) => format!("PE({},{}) blocked on {what}", i / m, i % m),
                        None => format!(
                            "{} of {expected} results collected; feeders done: features {}, weights {}",
                            collector.len(),
                            ffeed.done(),
                            wfeed.done()
                        ),
                    };
                    return Err(Error::Deadlock { tick, detail });
                }
            }
            if tick.is_multiple_of(100_000) {
                trace!("tick {tick}: {} of {expected} results", collector.len());
            }
        }

        for f in &w_fifos {
            c.fifo_reads += f.reads;
            c.fifo_writes += f.writes;
        }
        for f in &f_fifos {
            c.fifo_reads += f.reads;
            c.fifo_writes += f.writes;
        }
        for f in &wf_fifos {
            c.fifo_reads += f.reads;
            c.fifo_writes += f.writes;
        }
        c.fifo_reads += feed.neighbor_reads;
        c.fb_reads = feed.fb_reads;
        c.fb_line_reads = feed.fb_line_reads;
        c.neighbor_reads = feed.neighbor_reads;
        c.wb_reads = feed.wb_reads;
        let fp = footprint(program, cfg.ce_enabled);
        c.fb_bytes = fp.fb_bytes;
        c.wb_bytes = fp.wb_bytes;
        c.dram_bytes = fp.fb_bytes + fp.wb_bytes;

        let mac_cycles = tick.div_ceil(r_ratio);
        debug!("s2 run: {tick} DS ticks, {mac_cycles} MAC ticks, {} results", collector.len());
        finish_report(EngineKind::S2, program, cfg, tick, mac_cycles, c, &collector)
    }
}

/// Result exit order of every column: tile by tile, active rows ascending.
fn column_orders(program: &DataflowProgram, rows: usize, cols: usize) -> Vec<ColumnOrder> {
    (0..cols)
        .map(|col| {
            let seq = program
                .tiles
                .iter()
                .enumerate()
                .filter(|(_, t)| col < t.col_assignments.len())
                .flat_map(|(i, t)| (0..t.row_assignments.len().min(rows)).map(move |r| (i as u32, r as u16)))
                .collect();
            ColumnOrder::new(seq)
        })
        .collect()
}
