use bplight_core::arch::*;
use bplight_core::device::DeviceParams;
use bplight_core::perf::*;
use proptest::prelude::*;

#[test]
fn preset_layer_totals() {
    let count = |n| preset(n).unwrap().conv_layer_count();
    assert_eq!(count("VGG-A"), 8);
    assert_eq!(count("VGG-D"), 16);
    assert_eq!(count("LeNet-A"), 9);
    let lenet = preset("LeNet-A").unwrap();
    let widths: Vec<usize> = lenet.fe.iter().map(ConvStageSpec::out_width).collect();
    assert_eq!(widths, [6, 6, 16, 16, 120]);
    assert_eq!(lenet.dense_widths(), [84, 10]);
}

#[test]
fn every_preset_chains_and_round_trips() {
    for name in PRESET_NAMES {
        let cfg = preset(name).unwrap();
        let shapes = cfg.stage_shapes().unwrap();
        for pair in shapes.windows(2) {
            assert_eq!(pair[0].pooled, pair[1].input, "{name}");
        }
        if name.starts_with("VGG") {
            // The table lists VGG-B's last stage with a trailing 1x1 block.
            assert_eq!(cfg.fe.last().unwrap().blocks[0].width, 512, "{name}");
            assert_eq!(cfg.input, [3, 224, 224]);
        } else {
            assert_eq!(cfg.input, [1, 28, 28]);
        }
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }
}

#[test]
fn preset_names_are_case_insensitive_and_listed_on_error() {
    assert_eq!(preset("vgg-a").unwrap().name, "VGG-A");
    let err = preset("ResNet").unwrap_err().to_string();
    assert!(PRESET_NAMES.iter().all(|p| err.contains(p)), "{err}");
}

#[test]
fn parse_errors_name_line_and_field() {
    let cases = [
        ("input = 1x8x8\nfe = 3x3, 0, 1\nfc = 2, 1\n", 2, "fe"),
        ("input = 1x8x8\nfe = 3x3, 2, 1\nfc = 0, 1\n", 3, "fc"),
        ("input = 1x8x8\nfe = 3x4, 2, 1\nfc = 2, 1\n", 2, "fe"),
        ("input = 0x8x8\nfe = 3x3, 2, 1\nfc = 2, 1\n", 1, "input"),
    ];
    for (text, line, field) in cases {
        match parse_config(text).unwrap_err() {
            bplight_core::Error::Parse { line: l, field: f, .. } => assert_eq!((l, f.as_str()), (line, field)),
            other => panic!("unexpected {other}"),
        }
    }
}

#[test]
fn multi_block_stage_round_trips() {
    let text = "name = mixed\ninput = 3x32x32\nfe = 3x3, 8, 2; 1x1, 16, 1\nfe = 5x5, 4, 1\nfc = 10, 1\n";
    let cfg = parse_config(text).unwrap();
    assert_eq!(cfg.fe[0].layer_count(), 3);
    assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
}

fn arb_config() -> impl Strategy<Value = NetworkConfig> {
    let block = (prop::sample::select(ALLOWED_FILTERS.to_vec()), 1usize..64, 1usize..4)
        .prop_map(|(filter, width, repeats)| ConvBlock { filter, width, repeats });
    let stage = prop::collection::vec(block, 1..3).prop_map(|blocks| ConvStageSpec { blocks });
    let fc = (1usize..100, 1usize..3).prop_map(|(width, repeats)| FcStageSpec { width, repeats });
    (
        prop::collection::vec(stage, 1..4),
        prop::collection::vec(fc, 1..3),
        1usize..4,
        24usize..120,
        24usize..120,
    )
        .prop_map(|(fe, fc, c, h, w)| NetworkConfig {
            name: "generated".into(),
            input: [c, h, w],
            fe,
            fc,
        })
        .prop_filter("shape chain must hold", |cfg| cfg.validate().is_ok())
}

proptest! {
    #[test]
    fn serialize_parse_round_trip(cfg in arb_config()) {
        prop_assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn chunks_tile_the_fabric_exactly(h in 1usize..300, w in 1usize..300) {
        let cfg = preset("VGG-A").unwrap().with_image(h, w);
        let plan = plan_tiling(&cfg);
        prop_assert_eq!(plan.cycles, h.div_ceil(56) * w.div_ceil(56));
        let mut image_cover = vec![0u8; h * w];
        for tile in &plan.tiles {
            let mut cover = [[0u8; TILE_EDGE]; TILE_EDGE];
            for chunk in &tile.chunks {
                for y in 0..chunk.rect.h {
                    for x in 0..chunk.rect.w {
                        cover[chunk.rect.y - tile.rect.y + y][chunk.rect.x - tile.rect.x + x] += 1;
                    }
                }
                if let Some(a) = chunk.active {
                    for y in a.y..a.y + a.h {
                        for x in a.x..a.x + a.w {
                            image_cover[y * w + x] += 1;
                        }
                    }
                }
            }
            prop_assert!(cover.iter().flatten().all(|&c| c == 1));
        }
        prop_assert!(image_cover.iter().all(|&c| c == 1));
    }
}

#[test]
fn tiling_examples() {
    let vgg = preset("VGG-A").unwrap();
    assert_eq!(plan_tiling(&vgg).cycles, 16);
    assert_eq!(plan_tiling(&vgg.with_image(56, 56)).cycles, 1);
    let lenet = plan_tiling(&preset("LeNet-A").unwrap());
    assert_eq!((lenet.cycles, lenet.active_chunks()), (1, 1));
    let labels: Vec<char> = lenet.tiles[0].chunks.iter().map(|c| c.label).collect();
    assert_eq!(labels, ['A', 'B', 'C', 'D']);
}

#[test]
fn wma_banks() {
    assert_eq!(banks_per_wma(7).unwrap(), 784);
    assert_eq!(banks_per_wma(3).unwrap(), 4268);
    let lenet = allocate_wma(&preset("LeNet-A").unwrap()).unwrap();
    let vgg = allocate_wma(&preset("VGG-A").unwrap()).unwrap();
    assert!(lenet.total_memristors < vgg.total_memristors);
    assert_eq!(lenet.layers[0].idle_per_wma, 38416 - 4268 * 9);
}

#[test]
fn component_latency_sums() {
    let t = TimingParams::default();
    assert_eq!(t.t_fe_ps(), 50.0);
    assert_eq!(t.t_b_ps(), 90.0);
    assert_eq!(t.t_sm_ps(), 400.0);
    let slower = TimingParams { relu_ps: 30.0, split_ps: 15.0, ..t };
    assert_eq!(slower.t_fe_ps(), 70.0);
    assert_eq!(slower.t_b_ps(), 100.0);
}

#[test]
fn vgg_a_forward_latency() {
    let vgg = preset("VGG-A").unwrap();
    let t = TimingParams::default();
    let f = forward_latency(&vgg, &plan_tiling(&vgg), &t);
    assert_eq!(f.tile_clocks, 24);
    assert!((f.fe_ns - 153.6).abs() < 1e-9);
    assert!((f.total_ns - 154.1).abs() < 1e-9);
    assert_eq!(f.total_ns.round(), 154.0);
    let one = vgg.with_image(56, 56);
    assert!((forward_latency(&one, &plan_tiling(&one), &t).fe_ns - 9.6).abs() < 1e-12);
}

#[test]
fn forward_latency_is_linear_in_clock_period_and_tiles() {
    let t = TimingParams::default();
    let fast = TimingParams { clock_hz: 2.0 * t.clock_hz, ..t };
    for name in PRESET_NAMES {
        let net = preset(name).unwrap();
        let plan = plan_tiling(&net);
        let (a, b) = (forward_latency(&net, &plan, &t), forward_latency(&net, &plan, &fast));
        assert!((b.fe_ns - a.fe_ns / 2.0).abs() < 1e-9, "{name}");
    }
    let vgg = preset("VGG-A").unwrap();
    let fe = |h, w| {
        let n = vgg.with_image(h, w);
        forward_latency(&n, &plan_tiling(&n), &t).fe_ns
    };
    let single = fe(56, 56);
    for (h, w, tiles) in [(112, 56, 2.0), (112, 112, 4.0), (224, 224, 16.0)] {
        assert!((fe(h, w) - tiles * single).abs() < 1e-9);
    }
}

#[test]
fn backward_latency_examples() {
    let t = TimingParams::default();
    assert_eq!(backward_hops(&preset("VGG-A").unwrap()), 6);
    assert_eq!(backward_latency_ps(&preset("VGG-A").unwrap(), &t), 540.0);
    let one = parse_config("input = 1x8x8\nfe = 3x3, 2, 1\nfc = 2, 1\n").unwrap();
    assert_eq!(backward_latency_ps(&one, &t), 180.0);
}

#[test]
fn conv_op_examples() {
    assert_eq!(conv_ops(1, 1, 1, 1, 1, 0), 2);
    assert_eq!(conv_ops(1, 1, 3, 28, 28, 0), 12168);
}

/// MACs of every layer, enumerated output position by output position.
/// Padded taps count as work, as they do on the fabric.
fn brute_force_macs(net: &NetworkConfig) -> u64 {
    let [mut c, mut h, mut w] = net.input;
    let mut macs = 0u64;
    for stage in &net.fe {
        for (f, k) in stage.conv_layers() {
            for _oy in 0..h {
                for _ox in 0..w {
                    for _kernel in 0..k {
                        macs += (f * f * c) as u64;
                    }
                }
            }
            c = k;
        }
        h = h.div_ceil(2);
        w = w.div_ceil(2);
    }
    let mut inputs = c * h * w;
    for fc in &net.fc {
        for _ in 0..fc.repeats {
            macs += (inputs * fc.width) as u64;
            inputs = fc.width;
        }
    }
    macs
}

#[test]
fn vgg_a_ops_match_published_mac_count() {
    // Widely quoted multiply-accumulate count of the 11-layer VGG at 224x224.
    const PUBLISHED_MACS: f64 = 7.61e9;
    let vgg = preset("VGG-A").unwrap();
    let ops = count_ops(&vgg).unwrap();
    assert_eq!(ops.conv_macs + ops.dense_macs, brute_force_macs(&vgg));
    let rel = (ops.forward() as f64 - 2.0 * PUBLISHED_MACS).abs() / (2.0 * PUBLISHED_MACS);
    assert!(rel < 0.05, "relative gap {rel}");
    assert_eq!(ops.training(), 3 * ops.forward());
}

#[test]
fn default_area_is_the_table_column_sum() {
    let b = ComponentBudget::table();
    assert!((b.area_mm2() - 159.924_275).abs() < 1e-9, "{}", b.area_mm2());
    assert_eq!(ComponentBudget::for_device(&DeviceParams::default()).area_mm2(), b.area_mm2());
}

#[test]
fn reports_are_exact_and_scale_with_power() {
    let t = TimingParams::default();
    let budget = ComponentBudget::for_device(&DeviceParams::default());
    for name in PRESET_NAMES {
        for phase in Phase::ALL {
            let net = preset(name).unwrap();
            let r = efficiency_report(&net, &budget, &t, phase).unwrap();
            assert_eq!(r.energy_eff_gops_per_w * r.power_w, r.throughput_gops, "{name}");
            assert_eq!(r.comp_eff_gops_per_mm2 * r.area_mm2, r.throughput_gops, "{name}");
            let doubled = efficiency_report(&net, &budget.scale_power(2.0), &t, phase).unwrap();
            let ratio = r.energy_eff_gops_per_w / doubled.energy_eff_gops_per_w;
            assert!((ratio - 2.0).abs() < 1e-12, "{name}: {ratio}");
            for bits in [2, 8, 24, 32] {
                let d = resolution_delta(&r, bits, &ResolutionCalibration::for_phase(phase)).unwrap();
                assert_eq!(d.energy_eff_gops_per_w * d.power_w, d.throughput_gops);
                assert_eq!(d.comp_eff_gops_per_mm2 * d.area_mm2, d.throughput_gops);
            }
        }
    }
}

#[test]
fn resolution_trends_and_calibration() {
    let vgg = preset("VGG-A").unwrap();
    let budget = ComponentBudget::for_device(&DeviceParams::default());
    for phase in Phase::ALL {
        let cal = ResolutionCalibration::for_phase(phase);
        let base = efficiency_report(&vgg, &budget, &TimingParams::default(), phase).unwrap();
        assert_eq!(resolution_delta(&base, 16, &cal).unwrap(), base);
        let at = |bits| resolution_delta(&base, bits, &cal).unwrap();
        let (t8, t16, t32) = (at(8).throughput_gops, at(16).throughput_gops, at(32).throughput_gops);
        assert!(t32 < t16 && t16 < t8);
        let (e8, e32) = (at(8).energy_eff_gops_per_w, at(32).energy_eff_gops_per_w);
        assert!(e32 < base.energy_eff_gops_per_w && base.energy_eff_gops_per_w < e8);
        let speed_drop = 1.0 - t32 / t16;
        let energy_drop = 1.0 - e32 / base.energy_eff_gops_per_w;
        assert!((speed_drop - cal.speedup_drop_at_32).abs() <= 0.005);
        assert!((energy_drop - cal.energy_eff_drop_at_32).abs() <= 0.005);
        assert!(resolution_delta(&base, 1, &cal).is_err());
        assert!(resolution_delta(&base, 33, &cal).is_err());
    }
}

#[test]
fn budget_rejects_zero_count() {
    let mut b = ComponentBudget::table();
    b.rows[0].count = 0;
    assert!(b.validate().is_err());
}
