//! Network configurations, presets, tiling and weight-array allocation.
//!
//! Config text is flat `key = value`, one stage per line:
//!
//! ```text
//! name  = LeNet-A
//! input = 1x28x28
//! fe    = 3x3, 6, 1
//! fe    = 3x3, 256, 2; 1x1, 256, 1
//! fc    = 84, 1
//! fc    = 10, 1
//! ```
//!
//! `#` starts a comment. A `[device]` section may follow; it is read by
//! [`crate::device::DeviceParams::apply_config`] and skipped here.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALLOWED_FILTERS: [usize; 6] = [1, 2, 3, 4, 5, 7];
pub const WMA_MEMRISTORS: usize = 38416;
pub const TILE_EDGE: usize = 56;
pub const CHUNK_EDGE: usize = 28;
pub const CHUNKS_PER_TILE: usize = 4;
pub const MOVEMENTS_PER_CLOCK: usize = 8;
pub const FEATURES_PER_MOVEMENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filter: usize,
    pub width: usize,
    pub repeats: usize,
}

/// One feature-extraction stage: conv blocks run back to back, followed by
/// ReLU and a 2x2 pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStageSpec {
    pub blocks: Vec<ConvBlock>,
}

impl ConvStageSpec {
    pub fn single(filter: usize, width: usize, repeats: usize) -> Self {
        Self {
            blocks: vec![ConvBlock { filter, width, repeats }],
        }
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n((b.filter, b.width), b.repeats))
    }

    pub fn out_width(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.width)
    }

    pub fn layer_count(&self) -> usize {
        self.blocks.iter().map(|b| b.repeats).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcStageSpec {
    pub width: usize,
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageShape {
    pub input: [usize; 3],
    pub conv_output: [usize; 3],
    pub pooled: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    /// `(channels, height, width)`.
    pub input: [usize; 3],
    pub fe: Vec<ConvStageSpec>,
    pub fc: Vec<FcStageSpec>,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input.contains(&0) {
            return Err(Error::config("input extents must be positive"));
        }
        if self.fe.is_empty() {
            return Err(Error::config("at least one FE stage"));
        }
        if self.fc.is_empty() {
            return Err(Error::config("at least one FC stage"));
        }
        for (s, stage) in self.fe.iter().enumerate() {
            if stage.blocks.is_empty() {
                return Err(Error::config(format!("FE stage {} has no conv block", s + 1)));
            }
            for b in &stage.blocks {
                check_block(b).map_err(|m| Error::config(format!("FE stage {}: {m}", s + 1)))?;
            }
        }
        for f in &self.fc {
            if f.width == 0 || f.repeats == 0 {
                return Err(Error::config("FC width and repeats must be positive"));
            }
        }
        self.stage_shapes().map(|_| ())
    }

    /// Per-stage shapes under "same" conv padding and ceil pooling.
    pub fn stage_shapes(&self) -> Result<Vec<StageShape>> {
        let mut shape = self.input;
        let mut out = Vec::with_capacity(self.fe.len());
        for (s, stage) in self.fe.iter().enumerate() {
            let input = shape;
            for (filter, width) in stage.conv_layers() {
                let pad = (filter - 1) / 2;
                let (h, w) = (shape[1] + 2 * pad, shape[2] + 2 * pad);
                if h < filter || w < filter {
                    return Err(Error::config(format!(
                        "FE stage {} receives {}x{} maps, too small for a {filter}x{filter} filter",
                        s + 1,
                        shape[1],
                        shape[2]
                    )));
                }
                shape = [width, h - filter + 1, w - filter + 1];
            }
            let conv_output = shape;
            shape = [shape[0], shape[1].div_ceil(2), shape[2].div_ceil(2)];
            out.push(StageShape {
                input,
                conv_output,
                pooled: shape,
            });
        }
        Ok(out)
    }

    pub fn feature_count(&self) -> Result<usize> {
        let shapes = self.stage_shapes()?;
        Ok(shapes.last().map_or(0, |s| s.pooled.iter().product()))
    }

    /// Widths of every dense layer, expanded by repeats.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.fc
            .iter()
            .flat_map(|f| std::iter::repeat_n(f.width, f.repeats))
            .collect()
    }

    pub fn class_count(&self) -> usize {
        self.fc.last().map_or(0, |f| f.width)
    }

    pub fn conv_layer_count(&self) -> usize {
        self.fe.iter().map(ConvStageSpec::layer_count).sum()
    }

    /// Same network with a different input size (channels kept).
    pub fn with_image(&self, height: usize, width: usize) -> Self {
        let mut c = self.clone();
        c.input = [self.input[0], height, width];
        c
    }
}

fn check_block(b: &ConvBlock) -> std::result::Result<(), String> {
    if !ALLOWED_FILTERS.contains(&b.filter) {
        return Err(format!(
            "unknown filter size {0}x{0} (allowed: 1, 2, 3, 4, 5, 7)",
            b.filter
        ));
    }
    if b.width == 0 {
        return Err("width must be positive".into());
    }
    if b.repeats == 0 {
        return Err("repeats must be positive".into());
    }
    Ok(())
}

fn parse_int(line: usize, field: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::parse(line, field, format!("`{}`: {e}", s.trim())))
}

fn parse_filter(line: usize, s: &str) -> Result<usize> {
    let s = s.trim().to_ascii_lowercase().replace('×', "x");
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| Error::parse(line, "fe", format!("filter `{s}` is not MxM")))?;
    let (a, b) = (parse_int(line, "fe", a)?, parse_int(line, "fe", b)?);
    if a != b {
        return Err(Error::parse(line, "fe", format!("filter {a}x{b} is not square")));
    }
    Ok(a)
}

fn parse_block(line: usize, s: &str) -> Result<ConvBlock> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::parse(line, "fe", "expected `MxM, K, N`"));
    }
    let b = ConvBlock {
        filter: parse_filter(line, parts[0])?,
        width: parse_int(line, "fe", parts[1])?,
        repeats: parse_int(line, "fe", parts[2])?,
    };
    check_block(&b).map_err(|m| Error::parse(line, "fe", m))?;
    Ok(b)
}

fn parse_input(line: usize, s: &str) -> Result<[usize; 3]> {
    let dims: Vec<usize> = s
        .split(['x', 'X', '×'])
        .map(|d| parse_int(line, "input", d))
        .collect::<Result<_>>()?;
    match dims.as_slice() {
        [c, h, w] if *c > 0 && *h > 0 && *w > 0 => Ok([*c, *h, *w]),
        [h, w] if *h > 0 && *w > 0 => Ok([1, *h, *w]),
        _ => Err(Error::parse(line, "input", "expected CxHxW with positive extents")),
    }
}

pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    let mut name = None;
    let mut input = None;
    let mut fe = Vec::new();
    let mut fc = Vec::new();
    let mut in_network = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            match body {
                "[network]" => in_network = true,
                "[device]" => in_network = false,
                other => return Err(Error::parse(line, other, "unknown section")),
            }
            continue;
        }
        if !in_network {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(line, body, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "name" => name = Some(value.to_string()),
            "input" => input = Some(parse_input(line, value)?),
            "fe" => {
                let blocks = value
                    .split(';')
                    .map(|b| parse_block(line, b))
                    .collect::<Result<Vec<_>>>()?;
                fe.push(ConvStageSpec { blocks });
            }
            "fc" => {
                let parts: Vec<&str> = value.split(',').collect();
                let [w, r] = parts.as_slice() else {
                    return Err(Error::parse(line, "fc", "expected `K, N`"));
                };
                let stage = FcStageSpec {
                    width: parse_int(line, "fc", w)?,
                    repeats: parse_int(line, "fc", r)?,
                };
                if stage.width == 0 || stage.repeats == 0 {
                    return Err(Error::parse(line, "fc", "width and repeats must be positive"));
                }
                fc.push(stage);
            }
            other => return Err(Error::parse(line, other, "unknown key")),
        }
    }
    if fe.is_empty() {
        return Err(Error::parse(0, "fe", "at least one FE stage"));
    }
    let config = NetworkConfig {
        name: name.unwrap_or_else(|| "custom".into()),
        input: input.ok_or_else(|| Error::parse(0, "input", "missing input shape"))?,
        fe,
        fc,
    };
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &NetworkConfig) -> String {
    let mut s = String::new();
    let [c, h, w] = config.input;
    let _ = writeln!(s, "name = {}", config.name);
    let _ = writeln!(s, "input = {c}x{h}x{w}");
    for stage in &config.fe {
        let blocks: Vec<String> = stage
            .blocks
            .iter()
            .map(|b| format!("{0}x{0}, {1}, {2}", b.filter, b.width, b.repeats))
            .collect();
        let _ = writeln!(s, "fe = {}", blocks.join("; "));
    }
    for f in &config.fc {
        let _ = writeln!(s, "fc = {}, {}", f.width, f.repeats);
    }
    s
}

pub const PRESET_NAMES: [&str; 6] = ["VGG-A", "VGG-B", "VGG-C", "VGG-D", "LeNet-A", "LeNet-B"];

pub fn preset(name: &str) -> Result<NetworkConfig> {
    let s = ConvStageSpec::single;
    let sub = |filter, width, repeats| ConvStageSpec {
        blocks: vec![
            ConvBlock { filter, width, repeats },
            ConvBlock { filter: 1, width: 256, repeats: 1 },
        ],
    };
    let vgg_fc = vec![
        FcStageSpec { width: 4096, repeats: 2 },
        FcStageSpec { width: 1000, repeats: 1 },
    ];
    let lenet_fc = vec![
        FcStageSpec { width: 84, repeats: 1 },
        FcStageSpec { width: 10, repeats: 1 },
    ];
    let canonical = PRESET_NAMES
        .iter()
        .find(|p| p.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            Error::config(format!(
                "unknown preset `{name}`; valid presets: {}",
                PRESET_NAMES.join(", ")
            ))
        })?;
    let (input, fe, fc) = match *canonical {
        "VGG-A" => ([3, 224, 224], vec![s(3, 64, 1), s(3, 128, 1), s(3, 256, 2), s(3, 512, 2), s(3, 512, 2)], vgg_fc),
        "VGG-B" => ([3, 224, 224], vec![s(3, 64, 2), s(3, 128, 2), sub(3, 256, 2), sub(3, 512, 2), sub(3, 512, 2)], vgg_fc),
        "VGG-C" => ([3, 224, 224], vec![s(3, 64, 2), s(3, 128, 2), s(3, 256, 3), s(3, 512, 3), s(3, 512, 3)], vgg_fc),
        "VGG-D" => ([3, 224, 224], vec![s(3, 64, 2), s(3, 128, 2), s(3, 256, 4), s(3, 512, 4), s(3, 512, 4)], vgg_fc),
        "LeNet-A" => ([1, 28, 28], vec![s(3, 6, 1), s(3, 6, 1), s(3, 16, 2), s(3, 16, 4), s(3, 120, 1)], lenet_fc),
        "LeNet-B" => {
            log::warn!("LeNet-B keeps its 256-wide third stage as listed in the benchmark table");
            ([1, 28, 28], vec![s(3, 6, 1), s(3, 6, 1), s(3, 256, 1), s(3, 16, 6), s(3, 120, 1)], lenet_fc)
        }
        _ => unreachable!(),
    };
    Ok(NetworkConfig {
        name: canonical.to_string(),
        input,
        fe,
        fc,
    })
}

/// Resolve a preset name or, failing that, a config file path.
pub fn resolve(net: &str) -> Result<NetworkConfig> {
    if let Ok(cfg) = preset(net) {
        return Ok(cfg);
    }
    match std::fs::read_to_string(net) {
        Ok(text) => parse_config(&text),
        Err(_) => preset(net),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.h * self.w
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let y0 = self.y.max(other.y);
        let x0 = self.x.max(other.x);
        let y1 = (self.y + self.h).min(other.y + other.h);
        let x1 = (self.x + self.w).min(other.x + other.w);
        (y1 > y0 && x1 > x0).then(|| Rect { y: y0, x: x0, h: y1 - y0, w: x1 - x0 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    /// `A`, `B`, `C` or `D`, in fill order.
    pub label: char,
    /// Position in the nominal 56x56 tile grid.
    pub rect: Rect,
    /// Part of the chunk that overlaps the image, if any.
    pub active: Option<Rect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub rect: Rect,
    pub chunks: Vec<Chunk>,
}

impl Tile {
    pub fn active_chunks(&self) -> usize {
        self.chunks.iter().filter(|c| c.active.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub cycles: usize,
    pub tiles: Vec<Tile>,
    pub chunks_per_cycle: usize,
    pub movements_per_clock: usize,
    pub features_per_movement: usize,
}

impl TilingPlan {
    /// Largest number of chunks active in any tile.
    pub fn active_chunks(&self) -> usize {
        self.tiles.iter().map(Tile::active_chunks).max().unwrap_or(0)
    }
}

pub fn plan_tiling(net: &NetworkConfig) -> TilingPlan {
    let [_, h, w] = net.input;
    let image = Rect { y: 0, x: 0, h, w };
    let (rows, cols) = (h.div_ceil(TILE_EDGE), w.div_ceil(TILE_EDGE));
    let mut tiles = Vec::with_capacity(rows * cols);
    for ty in 0..rows {
        for tx in 0..cols {
            let rect = Rect { y: ty * TILE_EDGE, x: tx * TILE_EDGE, h: TILE_EDGE, w: TILE_EDGE };
            let chunks = ['A', 'B', 'C', 'D']
                .into_iter()
                .enumerate()
                .map(|(k, label)| {
                    let r = Rect {
                        y: rect.y + (k / 2) * CHUNK_EDGE,
                        x: rect.x + (k % 2) * CHUNK_EDGE,
                        h: CHUNK_EDGE,
                        w: CHUNK_EDGE,
                    };
                    Chunk { label, rect: r, active: r.intersect(&image) }
                })
                .collect();
            tiles.push(Tile { rect, chunks });
        }
    }
    TilingPlan {
        cycles: rows * cols,
        tiles,
        chunks_per_cycle: CHUNKS_PER_TILE,
        movements_per_clock: MOVEMENTS_PER_CLOCK,
        features_per_movement: FEATURES_PER_MOVEMENT,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerAllocation {
    pub stage: usize,
    pub layer: usize,
    pub filter: usize,
    pub kernels: usize,
    pub banks_per_wma: usize,
    pub wmas: usize,
    /// Memristors left unused in each WMA by floor division.
    pub idle_per_wma: usize,
    pub memristors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WmaAllocation {
    pub layers: Vec<LayerAllocation>,
    pub total_wmas: usize,
    pub total_memristors: usize,
}

pub fn banks_per_wma(filter: usize) -> Result<usize> {
    let banks = WMA_MEMRISTORS / (filter * filter).max(1);
    if banks == 0 {
        return Err(Error::config(format!("a {filter}x{filter} filter does not fit a WMA")));
    }
    Ok(banks)
}

/// One WMA per kernel of every conv layer.
pub fn allocate_wma(net: &NetworkConfig) -> Result<WmaAllocation> {
    let mut layers = Vec::new();
    for (s, stage) in net.fe.iter().enumerate() {
        for (l, (filter, kernels)) in stage.conv_layers().enumerate() {
            let banks = banks_per_wma(filter)?;
            layers.push(LayerAllocation {
                stage: s,
                layer: l,
                filter,
                kernels,
                banks_per_wma: banks,
                wmas: kernels,
                idle_per_wma: WMA_MEMRISTORS - banks * filter * filter,
                memristors: kernels * WMA_MEMRISTORS,
            });
        }
    }
    Ok(WmaAllocation {
        total_wmas: layers.iter().map(|l| l.wmas).sum(),
        total_memristors: layers.iter().map(|l| l.memristors).sum(),
        layers,
    })
}
