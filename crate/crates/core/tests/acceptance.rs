//! Acceptance criteria. Run with `cargo test -p evc-core --test acceptance`;
//! prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use evc_core::bframe::parse_bframe_payload;
use evc_core::counters;
use evc_core::entropy::{BitSink, BitSource};
use evc_core::event_sim::{decimate_keyframes, simulate_events, SimConfig};
use evc_core::metrics::psnr_on_blocks;
use evc_core::model::{build_gop_schedule, build_gop_schedule_with, Frame, FrameType, MotionVector};
use evc_core::pipeline::{encode_naive, encode_sequence, run_compare, AlphaMode, EncoderConfig};
use evc_core::rate::RateControlConfig;
use evc_core::stream::{decode_stream, parse_bitstream_bytes, synthesize_stream, Decoder, EncodedFrameUnit, StreamHeader};
use evc_core::synth::{horizontal_track, shifted_frame, translating_sequence};
use evc_core::transform::{dct8x8, idct8x8, BLOCK_LEN};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const FRAME_US: u64 = 33_333;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg.into()) }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Simulates the sensor on ground truth and returns (keyframes, events).
fn sensor(gt: &[Frame], decimation: usize) -> (Vec<Frame>, evc_core::EventStream) {
    let events = simulate_events(gt, &SimConfig { decimation, ..SimConfig::default() }).unwrap();
    (decimate_keyframes(gt, decimation).unwrap(), events)
}

fn interior_blocks(bw: usize, bh: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for by in 1..bh - 1 {
        for bx in 1..bw - 1 {
            v.push((bx, by));
        }
    }
    v
}

fn c1_zero_drift() -> Outcome {
    let t0 = Instant::now();
    let sequences: Vec<(&str, Vec<Frame>)> = vec![
        ("translate 64x64", translating_sequence(64, 64, 9, 2, FRAME_US, 1)),
        ("translate 128x96 fast", translating_sequence(128, 96, 9, 5, FRAME_US, 2)),
        ("padded 72x40", translating_sequence(72, 40, 9, 1, FRAME_US, 3)),
        ("stop-go 96x64", horizontal_track(96, 64, &[0, 0, 0, 2, 4, 4, 4, 6, 8], FRAME_US, 4)),
        ("diagonal 80x80", (0..9).map(|k| shifted_frame(80, 80, k, -(k as i64), 5).with_time(k as u32, k as u64 * FRAME_US)).collect()),
    ];
    let mut checked = 0;
    for (name, gt) in &sequences {
        let (keys, events) = sensor(gt, 4);
        for qp in [4u8, 16, 28, 40] {
            let cfg = EncoderConfig { rate: RateControlConfig::constant(qp), ..EncoderConfig::default() };
            let out = encode_sequence(&keys, &events, &cfg).map_err(e2s)?;
            let bytes = out.bitstream.to_bytes();
            let parsed = parse_bitstream_bytes(&bytes).map_err(e2s)?;
            let h = parsed.header;
            let mut dec = Decoder::new(h.padded_width(), h.padded_height());
            for u in &parsed.units {
                dec.decode_unit(u).map_err(e2s)?;
            }
            for recon in &out.key_recons {
                let d = dec.keyframe(recon.poc).ok_or("keyframe missing from decoder")?;
                ensure(d.samples() == recon.samples(), format!("{name} qp {qp}: keyframe {} drifted", recon.poc))?;
                checked += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1}s"))?;
    Ok(format!("{checked} keyframes byte-identical, {secs:.1}s"))
}

fn c2_decode_order() -> Outcome {
    let units = |s: &evc_core::GopStructure| {
        let mut k = Vec::new();
        let mut b = Vec::new();
        for slot in &s.frame_slots {
            if slot.frame_type.is_key() {
                k.push(EncodedFrameUnit::keyframe(slot.frame_type, slot.poc, 20, vec![]));
            }
        }
        for iv in s.intervals() {
            for slot in &iv.b_slots {
                b.push(EncodedFrameUnit::bframe(slot.poc, iv.open.poc, iv.close.poc, vec![]));
            }
        }
        (k, b)
    };
    let header = StreamHeader {
        width: 16, height: 16, block_size: 16, tu_size: 8, interp_factor: 3, gop_length: 4,
        frame_count: 0, base_qp: 20, timebase_num: 1, timebase_den: 30,
    };
    let s = build_gop_schedule(3, 3, 33_333).map_err(e2s)?;
    ensure(s.type_string() == "IBBBPBBBP", "display order")?;
    let (k, b) = units(&s);
    let bs = synthesize_stream(k, b, &s, header).map_err(e2s)?;
    let types: String = bs.units.iter().map(|u| u.frame_type.letter()).collect();
    ensure(types == "IPBBBPBBB", format!("got {types}"))?;
    ensure(bs.decode_order_pocs() == vec![0, 4, 1, 2, 3, 8, 5, 6, 7], "POC order")?;

    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.gen_range(2..12);
        let interp = rng.gen_range(0..6);
        let gop = rng.gen_range(1..6);
        let s = build_gop_schedule_with(n, interp, 40_000, gop).map_err(e2s)?;
        let (k, b) = units(&s);
        let bs = synthesize_stream(k, b, &s, header).map_err(e2s)?;
        bs.validate().map_err(e2s)?;
        let mut pocs = bs.decode_order_pocs();
        pocs.sort_unstable();
        ensure(pocs == (0..s.len() as u32).collect::<Vec<_>>(), "not a bijection")?;
    }
    Ok("IBBBPBBBP -> IPBBBPBBB; 100 random schedules bijective".into())
}

fn c3_motion_only() -> Outcome {
    let gt = translating_sequence(128, 128, 17, 2, FRAME_US, 7);
    let (keys, events) = sensor(&gt, 4);
    let out = encode_sequence(&keys, &events, &EncoderConfig::default()).map_err(e2s)?;
    let b = out.b_ops;
    ensure(b.dct_calls == 0 && b.quant_calls == 0, format!("B encode did {} dct / {} quant", b.dct_calls, b.quant_calls))?;
    ensure(b.sad_evals == 0 && b.mc_block_warps == 0, "B encode searched or warped")?;
    let (bw, bh) = (8, 8);
    let mut n = 0;
    for u in out.bitstream.units.iter().filter(|u| u.frame_type == FrameType::B) {
        parse_bframe_payload(u, bw, bh).map_err(e2s)?;
        // walk the motion syntax, then demand that nothing coefficient-shaped follows
        let mut src = BitSource::new(&u.payload);
        for _ in 0..bw * bh {
            let mode = src.read_ue().map_err(e2s)?;
            ensure(mode <= 2, format!("mode {mode}"))?;
            let comps = if mode == 0 { 4 } else { 2 };
            for _ in 0..comps {
                src.read_se().map_err(e2s)?;
            }
        }
        ensure(src.at_padded_end(), "trailing syntax in B payload")?;
        ensure(src.read_coeffs().is_err(), "coefficients parsed from B payload")?;
        n += 1;
    }
    ensure(n == 12, format!("expected 12 B units, saw {n}"))?;
    Ok(format!("{n} B units motion-only; B encode ops {:?}", b))
}

fn c4_translation() -> Outcome {
    let gt = translating_sequence(128, 128, 17, 2, FRAME_US, 11);
    let (keys, events) = sensor(&gt, 4);
    let cfg = EncoderConfig { rate: RateControlConfig::constant(16), ..EncoderConfig::default() };
    let out = encode_sequence(&keys, &events, &cfg).map_err(e2s)?;
    let decoded = decode_stream(&out.bitstream).map_err(e2s)?;
    ensure(decoded.len() == 17, "frame count")?;
    let interior = interior_blocks(8, 8);
    let mut worst = f64::INFINITY;
    let before = counters::snapshot();
    for f in decoded.iter().filter(|f| f.poc % 4 != 0) {
        let p = psnr_on_blocks(f, &gt[f.poc as usize], &interior).map_err(e2s)?;
        worst = worst.min(p);
    }
    ensure(counters::snapshot().since(&before).dct_calls == 0, "scoring touched transforms")?;
    ensure(worst >= 40.0, format!("worst interior B PSNR {worst:.2} dB < 40"))?;

    let mut hits = 0;
    let mut total = 0;
    for k in 0..keys.len() - 1 {
        let flow = evc_core::motion::block_match_keyframes(&keys[k], &keys[k + 1], 24).map_err(e2s)?;
        for &(bx, by) in &interior {
            total += 1;
            hits += (flow.field.get(bx, by) == MotionVector::new(8, 0)) as usize;
        }
    }
    let rate = hits as f64 / total as f64;
    ensure(rate >= 0.95, format!("global vector recovered on {:.1}%", rate * 100.0))?;
    Ok(format!("worst interior B PSNR {worst:.2} dB; ME exact on {:.1}% of interior blocks", rate * 100.0))
}

fn c5_event_guided() -> Outcome {
    // per keyframe interval: still for two frames, then 2 px per frame
    let mut positions = vec![0i64];
    for _ in 0..4 {
        let p = *positions.last().unwrap();
        positions.extend([p, p, p + 2, p + 4]);
    }
    let gt = horizontal_track(128, 128, &positions, FRAME_US, 21);
    let (keys, events) = sensor(&gt, 4);
    let interior = interior_blocks(8, 8);
    let mean_b_psnr = |mode: AlphaMode| -> Result<f64, String> {
        let cfg = EncoderConfig { alpha_mode: mode, rate: RateControlConfig::constant(16), ..EncoderConfig::default() };
        let out = encode_sequence(&keys, &events, &cfg).map_err(e2s)?;
        let dec = decode_stream(&out.bitstream).map_err(e2s)?;
        let ps: Vec<f64> = dec
            .iter()
            .filter(|f| f.poc % 4 != 0)
            .map(|f| psnr_on_blocks(f, &gt[f.poc as usize], &interior).unwrap())
            .collect();
        Ok(ps.iter().sum::<f64>() / ps.len() as f64)
    };
    let ev = mean_b_psnr(AlphaMode::Events)?;
    let lin = mean_b_psnr(AlphaMode::Linear)?;
    ensure(ev >= lin + 5.0, format!("event alpha {ev:.2} dB vs linear {lin:.2} dB"))?;
    Ok(format!("event alpha {ev:.2} dB vs linear {lin:.2} dB (+{:.2})", ev - lin))
}

fn c6_coupled_rate() -> Outcome {
    // 11 GOPs, so the first GOP (always coded at base qp) is a transient
    let gt = translating_sequence(128, 128, 161, 2, FRAME_US, 31);
    let (keys, events) = sensor(&gt, 4);
    let base = 28;
    let constant = EncoderConfig { rate: RateControlConfig::constant(base), ..EncoderConfig::default() };
    let c = encode_sequence(&keys, &events, &constant).map_err(e2s)?;
    let const_bits = c.bitstream.payload_bits() as f64;
    let frames = c.schedule.len() as f64;
    let per_gop = c.schedule.frames_per_gop() as f64;
    let target_total = 1.5 * const_bits;
    let cfg = EncoderConfig {
        rate: RateControlConfig::coupled(base, target_total * per_gop / frames),
        ..EncoderConfig::default()
    };
    let out = encode_sequence(&keys, &events, &cfg).map_err(e2s)?;
    let bits = out.bitstream.payload_bits() as f64;
    let gops = out.ledger.gops().len();
    let ledger_total = out.ledger.total_bits();
    let header_bits = (out.bitstream.serialized_len() as u64 - out.bitstream.payload_bits() / 8) * 8;
    let file_bits = out.bitstream.to_bytes().len() as u64 * 8;
    ensure(ledger_total + header_bits == file_bits, "ledger does not reconcile with file size")?;
    ensure(gops >= 3, format!("{gops} GOPs"))?;
    let ratio = bits / target_total;
    let qps: Vec<Vec<u8>> = out.ledger.gops().iter().map(|g| g.qp_per_keyframe.clone()).collect();
    ensure((0.85..=1.15).contains(&ratio), format!("stream at {:.3} of target; qps {qps:?}", ratio))?;
    Ok(format!("{gops} GOPs, stream at {:.3} of target, ledger == file bits - container bits", ratio))
}

fn c7_vs_naive() -> Outcome {
    let gt = translating_sequence(128, 128, 17, 2, FRAME_US, 11);
    let cfg = EncoderConfig { rate: RateControlConfig::constant(16), ..EncoderConfig::default() };
    let r = run_compare(&gt, &SimConfig::default(), &cfg).map_err(e2s)?;
    let (c, n) = (&r.coupled, &r.naive);
    ensure(c.intermediate_operations.dct_calls == 0 && n.intermediate_operations.dct_calls > 0, "B-POC dct counts")?;
    ensure(c.total_bits < n.total_bits, format!("bits coupled {} vs naive {}", c.total_bits, n.total_bits))?;
    ensure(c.compute_total < n.compute_total, format!("ops coupled {} vs naive {}", c.compute_total, n.compute_total))?;
    ensure(c.decoded_frames == n.decoded_frames, "decoded frame counts differ")?;
    let _ = encode_naive;
    Ok(format!(
        "bits {} vs {}, sad+dct+quant {} vs {}",
        c.total_bits, n.total_bits, c.compute_total, n.compute_total
    ))
}

fn c8_entropy() -> Outcome {
    let mut w = BitSink::new();
    for v in 0..=65535u32 {
        w.write_ue(v);
    }
    for v in -32768..=32767i32 {
        w.write_se(v);
    }
    let bytes = w.into_bytes();
    let mut r = BitSource::new(&bytes);
    for v in 0..=65535u32 {
        ensure(r.read_ue().map_err(e2s)? == v, format!("ue {v}"))?;
    }
    for v in -32768..=32767i32 {
        ensure(r.read_se().map_err(e2s)? == v, format!("se {v}"))?;
    }
    let mut rng = StdRng::seed_from_u64(8);
    let blocks: Vec<[i32; BLOCK_LEN]> = (0..10_000)
        .map(|_| {
            let density = rng.gen_range(0.0..1.0);
            let mut b = [0i32; BLOCK_LEN];
            for v in b.iter_mut() {
                if rng.gen_bool(density) {
                    *v = rng.gen_range(-32768..=32767);
                }
            }
            b
        })
        .collect();
    let mut w = BitSink::new();
    blocks.iter().for_each(|b| w.write_coeffs(b));
    let bytes = w.into_bytes();
    let mut r = BitSource::new(&bytes);
    for b in &blocks {
        ensure(&r.read_coeffs().map_err(e2s)? == b, "coefficient block mismatch")?;
    }
    Ok("ue [0, 65535], se [-32768, 32767], 10^4 coefficient blocks exact".into())
}

fn c9_event_sim() -> Outcome {
    let (a, b) = (30u8, 220u8);
    let c = ((b as f64 + 1.0).ln() - (a as f64 + 1.0).ln()) / 3.0;
    let frame = |v: u8| Frame::from_fn(8, 8, move |x, y| if (x, y) == (3, 5) { v } else { 100 });
    let frames = vec![frame(a).with_time(0, 1_000), frame(b).with_time(1, 61_000)];
    let s = simulate_events(&frames, &SimConfig { contrast_threshold: c, ..SimConfig::default() }).map_err(e2s)?;
    ensure(s.len() == 3, format!("{} events", s.len()))?;
    // linear ramp of 3 thresholds over 60 ms crosses at 1/3, 2/3 and 3/3
    for (e, expect) in s.events().iter().zip([21_000u64, 41_000, 61_000]) {
        ensure(e.t.abs_diff(expect) <= 1, format!("event at {} vs {expect}", e.t))?;
        ensure(e.polarity.sign() == 1 && (e.x, e.y) == (3, 5), "wrong event")?;
    }
    let still: Vec<Frame> = (0..5).map(|k| shifted_frame(32, 32, 0, 0, 3).with_time(k, k as u64 * 1000)).collect();
    let s = simulate_events(&still, &SimConfig::default()).map_err(e2s)?;
    ensure(s.is_empty(), "static video produced events")?;
    Ok("ramp -> 3 events at analytic times; static -> 0 events".into())
}

fn c10_transform() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10);
    let mut worst_err = 0.0f64;
    let mut worst_rel = 0.0f64;
    for _ in 0..10_000 {
        let mut x = [0i32; BLOCK_LEN];
        x.iter_mut().for_each(|v| *v = rng.gen_range(-255..=255));
        let c = dct8x8(&x);
        let back = idct8x8(&c);
        for (a, b) in x.iter().zip(back.iter()) {
            worst_err = worst_err.max((*a as f64 - b).abs());
        }
        let e_in: f64 = x.iter().map(|&v| (v as f64).powi(2)).sum();
        let e_out: f64 = c.iter().map(|v| v * v).sum();
        if e_in > 0.0 {
            worst_rel = worst_rel.max((e_in - e_out).abs() / e_in);
        }
    }
    ensure(worst_err < 0.5, format!("round-trip error {worst_err}"))?;
    ensure(worst_rel <= 1e-6, format!("Parseval error {worst_rel}"))?;
    Ok(format!("max round-trip error {worst_err:.2e}, max Parseval error {worst_rel:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("C1 zero-drift keyframes", c1_zero_drift),
        ("C2 decode-order rule", c2_decode_order),
        ("C3 motion-only B frames", c3_motion_only),
        ("C4 global-translation oracle", c4_translation),
        ("C5 event-guided nonuniform motion", c5_event_guided),
        ("C6 coupled rate control", c6_coupled_rate),
        ("C7 coupled vs naive", c7_vs_naive),
        ("C8 entropy round-trips", c8_entropy),
        ("C9 event simulator analytic cases", c9_event_sim),
        ("C10 transform numerics", c10_transform),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        counters::reset();
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
