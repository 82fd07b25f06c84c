use serde::{Deserialize, Serialize};

use crate::analog::SIGNALS_PER_MOVEMENT;
use crate::arch::{NetworkConfig, TilingPlan, CHUNK_EDGE};

/// Clock and per-component latencies in picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub clock_hz: f64,
    pub modulation_ps: f64,
    pub relu_ps: f64,
    pub pool_ps: f64,
    pub interface_ps: f64,
    pub error_modulation_ps: f64,
    pub split_ps: f64,
    pub wdm_mux_ps: f64,
    pub weight_mod_ps: f64,
    pub deriv_mod_ps: f64,
    pub demod_tia_ps: f64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            clock_hz: 2.5e9,
            modulation_ps: 20.0,
            relu_ps: 10.0,
            pool_ps: 10.0,
            interface_ps: 10.0,
            error_modulation_ps: 20.0,
            split_ps: 10.0,
            wdm_mux_ps: 10.0,
            weight_mod_ps: 10.0,
            deriv_mod_ps: 10.0,
            demod_tia_ps: 20.0,
        }
    }
}

impl TimingParams {
    pub fn t_sm_ps(&self) -> f64 {
        1e12 / self.clock_hz
    }

    /// One feed-forward hop: modulate, ReLU, pool, interface.
    pub fn t_fe_ps(&self) -> f64 {
        self.modulation_ps + self.relu_ps + self.pool_ps + self.interface_ps
    }

    /// One backward hop. The error is split twice: before and after the
    /// WDM multiplexer.
    pub fn t_b_ps(&self) -> f64 {
        self.error_modulation_ps
            + self.split_ps
            + self.wdm_mux_ps
            + self.split_ps
            + self.weight_mod_ps
            + self.deriv_mod_ps
            + self.demod_tia_ps
    }
}

/// Clock-by-clock account of one tile through the feature extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSchedule {
    /// Completion clock of each (chunk, stage) in the per-chunk phase.
    pub chunk_finish: Vec<Vec<usize>>,
    /// Clock at which the chunks merge, if they do.
    pub merge_clock: Option<usize>,
    /// Completion clock of each merged stage.
    pub merged_finish: Vec<usize>,
    pub clocks: usize,
}

fn transfer_clocks(kernels: usize, side: usize, link: usize) -> usize {
    (kernels * side * side).div_ceil(link).max(1)
}

/// Schedule one tile.
///
/// One clock fills the first conv. Each stage then streams its conv
/// outputs to the next stage at `movements x signals-per-movement` values
/// per clock. Chunks flow through the early stages as a flow shop; once a
/// chunk's pooled maps are at most 7 pixels across and more than one
/// chunk is active, the chunks are merged (one more fill clock) and carried
/// in a 28x28 frame that halves after every stage.
pub fn schedule_tile(net: &NetworkConfig, plan: &TilingPlan) -> TileSchedule {
    let link = plan.movements_per_clock * SIGNALS_PER_MOVEMENT;
    let chunks = plan.active_chunks().max(1);
    let widths: Vec<usize> = net.fe.iter().map(|s| s.out_width()).collect();
    let side = net.input[1].max(net.input[2]).min(CHUNK_EDGE);

    // Stages each chunk runs on its own, and their conv-output sides.
    let mut sides = Vec::new();
    let mut s_side = side;
    for _ in &widths {
        sides.push(s_side);
        let pooled = s_side.div_ceil(2);
        if chunks > 1 && pooled <= 7 {
            break;
        }
        s_side = pooled;
    }
    let split = sides.len();
    let per_chunk: Vec<usize> = sides
        .iter()
        .zip(&widths)
        .map(|(&s, &k)| transfer_clocks(k, s, link))
        .collect();

    let fill = 1;
    let mut chunk_finish = vec![vec![0; split]; chunks];
    for c in 0..chunks {
        for s in 0..split {
            let prev_chunk = if c > 0 { chunk_finish[c - 1][s] } else { 0 };
            let prev_stage = if s > 0 { chunk_finish[c][s - 1] } else { fill };
            chunk_finish[c][s] = prev_chunk.max(prev_stage) + per_chunk[s];
        }
    }
    let mut clock = chunk_finish.last().and_then(|f| f.last().copied()).unwrap_or(fill);

    let mut merge_clock = None;
    let mut merged_finish = Vec::new();
    if split < widths.len() {
        clock += fill;
        merge_clock = Some(clock);
        let mut frame = CHUNK_EDGE;
        for &k in &widths[split..] {
            clock += transfer_clocks(k, frame, link);
            merged_finish.push(clock);
            frame = frame.div_ceil(2);
        }
    }
    TileSchedule {
        chunk_finish,
        merge_clock,
        merged_finish,
        clocks: clock,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardLatency {
    pub tile_clocks: usize,
    pub cycles: usize,
    pub fe_ns: f64,
    pub fc_ns: f64,
    pub total_ns: f64,
}

/// `cycles * tile_clocks * t_sm` for feature extraction, then one SRAM
/// read plus one hop per FC stage.
pub fn forward_latency(net: &NetworkConfig, plan: &TilingPlan, t: &TimingParams) -> ForwardLatency {
    let tile = schedule_tile(net, plan);
    let t_sm_ns = t.t_sm_ps() / 1e3;
    let fe_ns = (plan.cycles * tile.clocks) as f64 * t_sm_ns;
    let fc_ns = t_sm_ns + net.fc.len() as f64 * t.t_fe_ps() / 1e3;
    ForwardLatency {
        tile_clocks: tile.clocks,
        cycles: plan.cycles,
        fe_ns,
        fc_ns,
        total_ns: fe_ns + fc_ns,
    }
}

/// Layer hops in the backward pass: one per FE stage plus the classifier.
pub fn backward_hops(net: &NetworkConfig) -> usize {
    net.fe.len() + 1
}

pub fn backward_latency_ps(net: &NetworkConfig, t: &TimingParams) -> f64 {
    backward_hops(net) as f64 * t.t_b_ps()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{plan_tiling, preset};

    #[test]
    fn vgg_a_tile_trace() {
        let net = preset("VGG-A").unwrap();
        let s = schedule_tile(&net, &plan_tiling(&net));
        assert_eq!(s.chunk_finish, vec![vec![3, 4], vec![5, 6], vec![7, 8], vec![9, 10]]);
        assert_eq!(s.merge_clock, Some(11));
        assert_eq!(s.merged_finish, vec![19, 23, 24]);
        assert_eq!(s.clocks, 24);
    }

    #[test]
    fn component_sums() {
        let t = TimingParams::default();
        assert_eq!(t.t_fe_ps(), 50.0);
        assert_eq!(t.t_b_ps(), 90.0);
        assert_eq!(t.t_sm_ps(), 400.0);
    }

    #[test]
    fn one_stage_backward() {
        let net = crate::arch::parse_config("input = 1x8x8\nfe = 3x3, 2, 1\nfc = 2, 1\n").unwrap();
        assert_eq!(backward_latency_ps(&net, &TimingParams::default()), 180.0);
    }
}
