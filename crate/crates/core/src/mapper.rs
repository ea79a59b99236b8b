//! Lowers a convolution layer onto the PE grid.
//!
//! Output stationary: PE row `r` of a tile owns one output position, PE
//! column `c` owns one kernel. Output positions are taken in raster order and
//! chunked by `N`, so neighbouring rows hold horizontally adjacent outputs.
//! Kernels are chunked by `M`. Tiles iterate row chunks outermost.
//!
//! A receptive field is enumerated channel group first, then kernel row, then
//! kernel column. With this order a stride-1 tap shared by rows `r` and
//! `r + 1` is visited by `r + 1` exactly one lockstep period before `r`, which
//! is what the one-group CE hold can forward.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::digest::workload_digest;
use crate::ecoo::{check_group_len, encode_group, CompressedStream, EcooTriplet, StreamKind, TripletLayout};
use crate::error::{invalid, Error, Result};
use crate::model::{ConvLayerSpec, QTensor, Scalar};

/// Global feature group identifier over the zero-padded input:
/// `((y + P) * W_pad + (x + P)) * C + cg`, `C = ceil(D / G)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Fb,
    Neighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupDirective {
    pub group: GroupId,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    /// Output position `(oy, ox)` per PE row.
    pub row_assignments: Vec<(usize, usize)>,
    /// Kernel index per PE column.
    pub col_assignments: Vec<usize>,
    /// Index of this tile's row chunk; tiles sharing it stream the same
    /// features.
    pub row_chunk: usize,
    pub feature_directives: Vec<Vec<GroupDirective>>,
}

/// One encoded feature group together with its dense source values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroup {
    pub triplets: Vec<EcooTriplet>,
    pub dense: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataflowProgram {
    pub layer: ConvLayerSpec,
    pub group_len: usize,
    pub rows: usize,
    pub cols: usize,
    pub tiles: Vec<Tile>,
    /// Indexed by `GroupId`.
    pub feature_groups: Vec<FeatureGroup>,
    /// One encoded stream per kernel, in receptive-field group order.
    pub kernel_streams: Vec<CompressedStream>,
    /// Dense kernel values in the same order, cut into groups.
    pub kernel_dense: Vec<Vec<Vec<Scalar>>>,
    /// Any operand is 16-bit; enables the tag bit in every triplet.
    pub mixed: bool,
    pub ce_scheduled: bool,
    pub workload_digest: u64,
}

/// Channel groups per spatial tap.
pub fn channel_groups(layer: &ConvLayerSpec, group_len: usize) -> usize {
    layer.kernel.depth.div_ceil(group_len)
}

fn padded_width(layer: &ConvLayerSpec) -> usize {
    layer.input.width + 2 * layer.padding
}

fn padded_height(layer: &ConvLayerSpec) -> usize {
    layer.input.height + 2 * layer.padding
}

/// Ordered group ids of the receptive field of output `(oy, ox)`.
pub fn receptive_field_groups(layer: &ConvLayerSpec, group_len: usize, oy: usize, ox: usize) -> Result<Vec<GroupId>> {
    layer.validate()?;
    check_group_len(group_len)?;
    let out = layer.output_dims();
    if oy >= out.height || ox >= out.width {
        return Err(invalid(format!("output position ({oy},{ox}) outside {out}")));
    }
    let c = channel_groups(layer, group_len);
    let wp = padded_width(layer);
    let k = layer.kernel;
    let mut ids = Vec::with_capacity(k.height * k.width * c);
    for cg in 0..c {
        for kh in 0..k.height {
            for kw in 0..k.width {
                let y = oy * layer.stride + kh;
                let x = ox * layer.stride + kw;
                ids.push(GroupId(((y * wp + x) * c + cg) as u32));
            }
        }
    }
    Ok(ids)
}

/// Builds the program with every directive sourced from FB.
pub fn lower_layer(
    layer: &ConvLayerSpec,
    input: &QTensor,
    kernels: &[QTensor],
    rows: usize,
    cols: usize,
    group_len: usize,
) -> Result<DataflowProgram> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("array {rows}x{cols} must be at least 1x1")));
    }
    check_group_len(group_len)?;
    layer.check_tensors(input, kernels)?;
    let id_space = padded_height(layer) * padded_width(layer) * channel_groups(layer, group_len);
    if id_space > u32::MAX as usize {
        return Err(invalid("layer too large for 32-bit group ids"));
    }

    let mixed = input.has_wide() || kernels.iter().any(QTensor::has_wide);
    let c = channel_groups(layer, group_len);
    let d = layer.kernel.depth;
    let p = layer.padding;

    let mut feature_groups = Vec::with_capacity(id_space);
    for yp in 0..padded_height(layer) {
        for xp in 0..padded_width(layer) {
            let inside = yp >= p && xp >= p && yp - p < layer.input.height && xp - p < layer.input.width;
            for cg in 0..c {
                let range = cg * group_len..((cg + 1) * group_len).min(d);
                let dense = if inside {
                    input.fiber(yp - p, xp - p)[range].to_vec()
                } else {
                    vec![Scalar::ZERO; range.len()]
                };
                let triplets = encode_group(&dense, group_len, false)?;
                feature_groups.push(FeatureGroup { triplets, dense });
            }
        }
    }

    let k = layer.kernel;
    let mut kernel_dense = Vec::with_capacity(kernels.len());
    let mut kernel_streams = Vec::with_capacity(kernels.len());
    for kernel in kernels {
        let mut groups = Vec::with_capacity(k.height * k.width * c);
        for cg in 0..c {
            for kh in 0..k.height {
                for kw in 0..k.width {
                    let range = cg * group_len..((cg + 1) * group_len).min(d);
                    groups.push(kernel.fiber(kh, kw)[range].to_vec());
                }
            }
        }
        let stream =
            CompressedStream::from_groups(groups.iter().map(Vec::as_slice), group_len, StreamKind::Weight, mixed)?;
        kernel_streams.push(stream);
        kernel_dense.push(groups);
    }

    let out = layer.output_dims();
    let positions: Vec<(usize, usize)> = (0..out.height)
        .flat_map(|oy| (0..out.width).map(move |ox| (oy, ox)))
        .collect();
    let kernel_ids: Vec<usize> = (0..layer.num_kernels).collect();
    let mut tiles = Vec::new();
    for (row_chunk, pos_chunk) in positions.chunks(rows).enumerate() {
        let directives = pos_chunk
            .iter()
            .map(|&(oy, ox)| {
                Ok(receptive_field_groups(layer, group_len, oy, ox)?
                    .into_iter()
                    .map(|group| GroupDirective {
                        group,
                        source: Source::Fb,
                    })
                    .collect())
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        for col_chunk in kernel_ids.chunks(cols) {
            tiles.push(Tile {
                row_assignments: pos_chunk.to_vec(),
                col_assignments: col_chunk.to_vec(),
                row_chunk,
                feature_directives: directives.clone(),
            });
        }
    }

    Ok(DataflowProgram {
        layer: *layer,
        group_len,
        rows,
        cols,
        tiles,
        feature_groups,
        kernel_streams,
        kernel_dense,
        mixed,
        ce_scheduled: false,
        workload_digest: workload_digest(layer, input, kernels),
    })
}

/// Marks directives that can be served from the neighbouring CE's hold.
///
/// CEs advance in lockstep periods, one group per CE per period. Directive
/// `p` of row `r` becomes `Neighbor` when row `r + 1` streamed the same group
/// at period `p - 1` of the same tile. The replay asserts every such request
/// is satisfiable by a one-group hold.
pub fn schedule_ce(mut program: DataflowProgram) -> Result<DataflowProgram> {
    for tile in &mut program.tiles {
        let n = tile.feature_directives.len();
        for r in 0..n.saturating_sub(1) {
            let (lower, upper) = tile.feature_directives.split_at_mut(r + 1);
            let mine = &mut lower[r];
            let above = &upper[0];
            for (p, d) in mine.iter_mut().enumerate().skip(1) {
                if above.get(p - 1).is_some_and(|a| a.group == d.group) {
                    d.source = Source::Neighbor;
                }
            }
        }
        replay_holds(tile)?;
    }
    program.ce_scheduled = true;
    Ok(program)
}

fn replay_holds(tile: &Tile) -> Result<()> {
    let periods = tile.feature_directives.iter().map(Vec::len).max().unwrap_or(0);
    let mut hold: Vec<Option<GroupId>> = vec![None; tile.feature_directives.len()];
    for p in 0..periods {
        for (r, dirs) in tile.feature_directives.iter().enumerate() {
            let Some(d) = dirs.get(p) else { continue };
            if d.source == Source::Neighbor && hold.get(r + 1).copied().flatten() != Some(d.group) {
                return Err(Error::ScheduleFault(format!(
                    "row {r} period {p} expects group {} in row {}'s hold",
                    d.group.0,
                    r + 1
                )));
            }
        }
        for (r, dirs) in tile.feature_directives.iter().enumerate() {
            hold[r] = dirs.get(p).map(|d| d.group);
        }
    }
    Ok(())
}

/// Buffer capacity in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub fb_bytes: u64,
    pub wb_bytes: u64,
}

/// Packed stream sizes. Without CE the feature buffer holds one copy of a
/// group per directive of each row chunk; with CE it holds each distinct
/// group of a row chunk once. Column tiles of the same row chunk re-read the
/// same buffer contents.
pub fn footprint(program: &DataflowProgram, ce_enabled: bool) -> Footprint {
    let fl = TripletLayout::new(StreamKind::Feature, program.group_len, program.mixed).bits() as u64;
    let wl = TripletLayout::new(StreamKind::Weight, program.group_len, program.mixed).bits() as u64;
    let wb_bits: u64 = program.kernel_streams.iter().map(|s| s.len() as u64 * wl).sum();
    let len = |g: &GroupId| program.feature_groups[g.0 as usize].triplets.len() as u64;
    let mut fb_triplets = 0u64;
    let mut seen_chunk = None;
    for tile in &program.tiles {
        if seen_chunk == Some(tile.row_chunk) {
            continue;
        }
        seen_chunk = Some(tile.row_chunk);
        let groups = tile.feature_directives.iter().flatten().map(|d| d.group);
        fb_triplets += if ce_enabled {
            groups.collect::<BTreeSet<_>>().iter().map(len).sum::<u64>()
        } else {
            groups.map(|g| len(&g)).sum::<u64>()
        };
    }
    Footprint {
        fb_bytes: (fb_triplets * fl).div_ceil(8),
        wb_bytes: wb_bits.div_ceil(8),
    }
}

impl DataflowProgram {
    pub fn group(&self, id: GroupId) -> &FeatureGroup {
        &self.feature_groups[id.0 as usize]
    }

    /// Groups per receptive field (equal for every row).
    pub fn groups_per_field(&self) -> usize {
        self.layer.kernel.height * self.layer.kernel.width * channel_groups(&self.layer, self.group_len)
    }

    pub fn neighbor_directives(&self) -> usize {
        self.tiles
            .iter()
            .flat_map(|t| t.feature_directives.iter().flatten())
            .filter(|d| d.source == Source::Neighbor)
            .count()
    }

    /// Human-readable summary for debugging.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let tiles: Vec<_> = self
            .tiles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                json!({
                    "tile": i,
                    "rows": t.row_assignments,
                    "cols": t.col_assignments,
                    "directives": t.feature_directives.iter().map(|ds| {
                        ds.iter().map(|d| format!(
                            "{}{}:{}",
                            match d.source { Source::Fb => "fb", Source::Neighbor => "nb" },
                            d.group.0,
                            self.group(d.group).triplets.len()
                        )).collect::<Vec<_>>()
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "layer": self.layer,
            "group_len": self.group_len,
            "array": [self.rows, self.cols],
            "mixed": self.mixed,
            "ce_scheduled": self.ce_scheduled,
            "weight_stream_lengths": self.kernel_streams.iter().map(CompressedStream::len).collect::<Vec<_>>(),
            "tiles": tiles,
        })
    }
}
