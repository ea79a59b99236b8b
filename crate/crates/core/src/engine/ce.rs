//! Array-edge feeders: the CE array streaming feature groups into row heads,
//! and the weight buffer streaming kernels into column heads.
//!
//! With CE enabled the CEs move in lockstep periods of one group each. A
//! `Neighbor` directive is served from the hold of the CE one row up, which
//! kept the group it streamed in the previous period. Without CE every row
//! reads the feature buffer independently.

use super::fifo::Fifo;
use crate::ecoo::EcooTriplet;
use crate::error::{Error, Result};
use crate::mapper::{DataflowProgram, GroupDirective, GroupId, Source};

#[derive(Debug, Clone, Copy, Default)]
pub struct FeedCounters {
    pub fb_reads: u64,
    pub fb_line_reads: u64,
    pub neighbor_reads: u64,
    pub wb_reads: u64,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    period: usize,
    tile: usize,
    p: usize,
    dir: GroupDirective,
}

#[derive(Debug, Clone, Default)]
struct RowFeed {
    jobs: Vec<Job>,
    job: usize,
    pos: usize,
}

pub struct FeatureFeed<'a> {
    program: &'a DataflowProgram,
    lockstep: bool,
    rows: Vec<RowFeed>,
    period: usize,
    hold: Vec<Option<GroupId>>,
    hold_staged: Vec<Option<GroupId>>,
}

impl<'a> FeatureFeed<'a> {
    pub fn new(program: &'a DataflowProgram, rows: usize, ce_enabled: bool) -> Self {
        let q = program.groups_per_field();
        let mut feeds = vec![RowFeed::default(); rows];
        for (t, tile) in program.tiles.iter().enumerate() {
            for (r, dirs) in tile.feature_directives.iter().enumerate() {
                for (p, &dir) in dirs.iter().enumerate() {
                    let dir = if ce_enabled {
                        dir
                    } else {
                        GroupDirective {
                            source: Source::Fb,
                            ..dir
                        }
                    };
                    feeds[r].jobs.push(Job {
                        period: t * q + p,
                        tile: t,
                        p,
                        dir,
                    });
                }
            }
        }
        FeatureFeed {
            program,
            lockstep: ce_enabled,
            rows: feeds,
            period: 0,
            hold: vec![None; rows],
            hold_staged: vec![None; rows],
        }
    }

    fn triplets(&self, g: GroupId) -> &'a [EcooTriplet] {
        &self.program.group(g).triplets
    }

    /// Streams at most one triplet per row into `heads[r]`.
    #[allow(clippy::needless_range_loop)]
    pub fn step(&mut self, heads: &mut [&mut Fifo<EcooTriplet>], c: &mut FeedCounters) -> Result<bool> {
        let mut progress = false;
        for r in 0..self.rows.len() {
            let feed = &self.rows[r];
            let Some(&job) = feed.jobs.get(feed.job) else { continue };
            if self.lockstep && job.period != self.period {
                continue;
            }
            let trips = self.triplets(job.dir.group);
            let pos = feed.pos;
            if pos >= trips.len() || !heads[r].can_push() {
                continue;
            }
            if job.dir.source == Source::Neighbor {
                if self.hold.get(r + 1).copied().flatten() != Some(job.dir.group) {
                    return Err(Error::ScheduleFault(format!(
                        "CE {r} expects group {} in the hold of CE {}",
                        job.dir.group.0,
                        r + 1
                    )));
                }
                c.neighbor_reads += 1;
            } else {
                c.fb_reads += 1;
                if pos == 0 {
                    c.fb_line_reads += 1;
                }
            }
            heads[r].push(trips[pos]);
            progress = true;
            let feed = &mut self.rows[r];
            feed.pos += 1;
            if feed.pos == trips.len() {
                if self.lockstep {
                    if r > 0 && self.referenced_below(r, job) {
                        debug_assert!(self.hold_staged[r].is_none(), "CE hold exceeds one group");
                        self.hold_staged[r] = Some(job.dir.group);
                    }
                } else {
                    feed.job += 1;
                    feed.pos = 0;
                }
            }
        }
        Ok(progress)
    }

    /// Row `r - 1` takes this group from CE `r` in the next period.
    fn referenced_below(&self, r: usize, job: Job) -> bool {
        self.program.tiles[job.tile].feature_directives[r - 1]
            .get(job.p + 1)
            .is_some_and(|d| d.source == Source::Neighbor && d.group == job.dir.group)
    }

    /// Period boundary check, run after every tick.
    pub fn end_tick(&mut self) -> bool {
        if !self.lockstep {
            return false;
        }
        let mut any = false;
        for feed in &self.rows {
            if let Some(job) = feed.jobs.get(feed.job).filter(|j| j.period == self.period) {
                if feed.pos < self.triplets(job.dir.group).len() {
                    return false;
                }
                any = true;
            }
        }
        if !any {
            return false;
        }
        for feed in &mut self.rows {
            if feed.jobs.get(feed.job).is_some_and(|j| j.period == self.period) {
                feed.job += 1;
                feed.pos = 0;
            }
        }
        self.hold = std::mem::replace(&mut self.hold_staged, vec![None; self.hold.len()]);
        self.period += 1;
        true
    }

    pub fn done(&self) -> bool {
        self.rows.iter().all(|f| f.job >= f.jobs.len())
    }
}

/// Weight buffer: one kernel stream per active column per tile.
pub struct WeightFeed<'a> {
    program: &'a DataflowProgram,
    cols: Vec<(Vec<usize>, usize, usize)>,
}

impl<'a> WeightFeed<'a> {
    pub fn new(program: &'a DataflowProgram, cols: usize) -> Self {
        let mut jobs = vec![(Vec::new(), 0, 0); cols];
        for tile in &program.tiles {
            for (c, &k) in tile.col_assignments.iter().enumerate() {
                jobs[c].0.push(k);
            }
        }
        WeightFeed { program, cols: jobs }
    }

    pub fn step(&mut self, heads: &mut [&mut Fifo<EcooTriplet>], c: &mut FeedCounters) -> bool {
        let mut progress = false;
        for (col, (kernels, job, pos)) in self.cols.iter_mut().enumerate() {
            let Some(&k) = kernels.get(*job) else { continue };
            if !heads[col].can_push() {
                continue;
            }
            let s = &self.program.kernel_streams[k].triplets;
            heads[col].push(s[*pos]);
            c.wb_reads += 1;
            progress = true;
            *pos += 1;
            if *pos == s.len() {
                *job += 1;
                *pos = 0;
            }
        }
        progress
    }

    pub fn done(&self) -> bool {
        self.cols.iter().all(|(k, j, _)| *j >= k.len())
    }
}
