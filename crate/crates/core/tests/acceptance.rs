//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! `cargo test -p handkit-core --test acceptance` runs all of them; extra
//! arguments after `--` select criteria by number, e.g. `-- 3 5`.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use handkit_core::clip::{
    clip_intensity, extract_clips, filter_clips, passes, ClipSpec, DefectReport, Intensity,
    IntensityConfig,
};
use handkit_core::contact::{intra_contact_frame, score, ContactLabels, CONTACT_THRESHOLD};
use handkit_core::descriptors::palm::closest_pairs;
use handkit_core::descriptors::{
    flexion_at, palm_cloud, palm_relation, DescriptorId, DescriptorKind, DescriptorTimeline,
    HandScope, PalmCloud, Values,
};
use handkit_core::events::{
    label_states, reconstruct_labels, segment_events, FeatureDoc, StateTable,
};
use handkit_core::fsq::FsqConfig;
use handkit_core::guidance::{
    blend_clean, gamma_field, guided_sample, initial_noise, long_horizon_target, renoise,
    task_centers, window_weight, CenterSets, GuidanceConfig, NoiseSchedule, NoiseSource,
    SeededNoise, Task, Tensor, ZeroNoise, SAMPLE_JOINTS,
};
use handkit_core::mocap::{optimize_wrist_position, wrist_objective, WristSolverOptions};
use handkit_core::motion::{
    joint, random_rotation, Finger, Frame, Hand, MotionSequence, RigidTransform, Segment, Vec3,
    JOINTS_PER_HAND, WRIST,
};
use handkit_core::pipeline::{
    run_pipeline, Manifest, PipelineConfig, Stage, SynthSource, MANIFEST_FILE,
};
use handkit_core::repr::{
    from_ar_rep, hand_scalars, left_wrist_path, to_ar_rep, to_diffusion_rep, ArLocalRep,
};
use handkit_core::synth::{
    corpus_member, local_pose, place, rest_frame, static_sequence, Articulation, HandShape,
};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. State table

/// Expected interval `[lo, hi)` and label.
type Row = (f64, f64, &'static str);

/// The expected states; the last flexion and spacing rows are closed at 180.
const TABLE: &[(DescriptorKind, &[Row])] = &[
    (
        DescriptorKind::FingerFlexing,
        &[
            (-180.0, -20.0, "hyper extend"),
            (-20.0, 30.0, "fully extend"),
            (30.0, 60.0, "partially bent"),
            (60.0, 180.0, "fully bent"),
        ],
    ),
    (
        DescriptorKind::FingerSpacing,
        &[(0.0, 20.0, "closed"), (20.0, 180.0, "open")],
    ),
    (
        DescriptorKind::FingerFingerDistance,
        &[(0.0, 0.02, "contact"), (0.02, f64::INFINITY, "no contact")],
    ),
    (
        DescriptorKind::FingerPalmDistance,
        &[
            (0.0, 0.025, "contact"),
            (0.025, 0.035, "near"),
            (0.035, f64::INFINITY, "far"),
        ],
    ),
];

fn oracle_label(rows: &[Row], v: f64) -> Option<&'static str> {
    let last = rows.len() - 1;
    rows.iter().enumerate().find_map(|(i, &(lo, hi, label))| {
        let closed_top = i == last && hi == 180.0;
        (v >= lo && (v < hi || (closed_top && v == hi))).then_some(label)
    })
}

fn state_table() -> Outcome {
    let table = StateTable::standard();
    let mut checked = 0;
    for &(kind, rows) in TABLE {
        let lo = rows[0].0;
        let hi = rows[rows.len() - 1].1;
        let top = if hi.is_finite() { hi } else { 1.0 };
        let mut values: Vec<f64> = (0..=2000)
            .map(|k| lo + (top - lo) * k as f64 / 2000.0)
            .collect();
        for &(a, b, _) in rows {
            for x in [a, b] {
                if x.is_finite() {
                    values.extend([x.next_down(), x, x.next_up()]);
                }
            }
            if b.is_finite() {
                values.push(0.5 * (a + b));
            }
        }
        values.retain(|v| oracle_label(rows, *v).is_some());
        let timeline = DescriptorTimeline {
            id: DescriptorId::new(kind, Hand::Right, "probe"),
            values: Values::Scalar(values.clone()),
        };
        let got = label_states(&timeline, &table, 0.0).map_err(|e| format!("{kind:?}: {e}"))?;
        for (v, g) in values.iter().zip(&got) {
            let want = oracle_label(rows, *v).expect("filtered");
            ensure(g == want, || {
                format!("{kind:?} value {v:e}: got {g:?}, want {want:?}")
            })?;
        }
        // values outside the table have no state
        for v in [
            lo.next_down(),
            if hi.is_finite() {
                hi.next_up()
            } else {
                f64::NAN
            },
        ] {
            ensure(table.lookup(kind, v).is_none(), || {
                format!("{kind:?} {v} should be out of range")
            })?;
        }
        checked += values.len();
    }

    // worked examples, the flexion one measured on a bent finger
    let mut art = Articulation::default();
    art.flex[Finger::Index.index()][1] = 45f64.to_radians();
    let pose = local_pose(&HandShape::default(), &art, Hand::Right);
    let flex =
        flexion_at(&pose, Hand::Right, Finger::Index, Segment::Pip).ok_or("degenerate finger")?;
    ensure((flex - 45.0).abs() < 1e-9, || {
        format!("constructed flexion {flex}")
    })?;
    let label = |kind, v| {
        table
            .lookup(kind, v)
            .map(|i| table.rows(kind).unwrap()[i].label.clone())
    };
    for (kind, v, want) in [
        (DescriptorKind::FingerFlexing, flex, "partially bent"),
        (DescriptorKind::FingerFlexing, -25.0, "hyper extend"),
        (DescriptorKind::FingerFlexing, 180.0, "fully bent"),
        (DescriptorKind::FingerPalmDistance, 0.03, "near"),
        (DescriptorKind::FingerFingerDistance, 0.02, "no contact"),
    ] {
        ensure(label(kind, v).as_deref() == Some(want), || {
            format!("{kind:?} {v}: got {:?}, want {want}", label(kind, v))
        })?;
    }
    Ok(format!("{checked} swept values, exact"))
}

// 2. Wrist solver

fn random_hand(rng: &mut ChaCha8Rng) -> [Vec3; JOINTS_PER_HAND] {
    let mut art = Articulation::default();
    for f in 0..5 {
        for k in 0..3 {
            art.flex[f][k] = rng.random_range(-0.2..1.4);
        }
        art.splay[f] = rng.random_range(-0.15..0.15);
    }
    let shape = HandShape::default().scaled(rng.random_range(0.8..1.25));
    let hand = if rng.random_bool(0.5) {
        Hand::Left
    } else {
        Hand::Right
    };
    let origin = Vec3::new(
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..1.5),
    );
    place(
        &local_pose(&shape, &art, hand),
        &random_rotation(rng),
        origin,
    )
}

fn mcps_of(pose: &[Vec3; JOINTS_PER_HAND]) -> [Vec3; 5] {
    Finger::ALL.map(|f| pose[joint(f, Segment::Mcp)])
}

/// Minimum of the objective on a 1 mm grid over a 4 cm cube around `centre`,
/// then two finer grids around the best node.
fn grid_minimum(mcps: &[Vec3; 5], lengths: &[f64; 5], centre: Vec3) -> Vec3 {
    let mut best = centre;
    let (mut half, mut step): (f64, f64) = (0.02, 0.001);
    for _ in 0..3 {
        let c = best;
        let n = (half / step).round() as i32;
        let mut best_f = f64::INFINITY;
        for i in -n..=n {
            for j in -n..=n {
                for k in -n..=n {
                    let p = c + Vec3::new(i as f64, j as f64, k as f64) * step;
                    let v = wrist_objective(mcps, lengths, &p);
                    if v < best_f {
                        best_f = v;
                        best = p;
                    }
                }
            }
        }
        half = 2.0 * step;
        step /= 10.0;
    }
    best
}

fn wrist_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = WristSolverOptions::default();
    let (mut worst_pos, mut worst_obj) = (0.0f64, 0.0f64);
    for case in 0..100 {
        let pose = random_hand(&mut rng);
        let mcps = mcps_of(&pose);
        let lengths = mcps.map(|m| (m - pose[WRIST]).norm());
        let dir = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let init = pose[WRIST] + dir * rng.random_range(0.0..0.02);
        let fit = optimize_wrist_position(&mcps, &lengths, init, opts)
            .map_err(|e| format!("case {case}: {e}"))?;
        let err = (fit.wrist - pose[WRIST]).norm();
        worst_pos = worst_pos.max(err);
        worst_obj = worst_obj.max(fit.residual);
        ensure(err <= 1e-5 && fit.residual <= 1e-10, || {
            format!(
                "case {case}: position error {err:e}, objective {:e}",
                fit.residual
            )
        })?;
    }

    // inconsistent lengths: the solver must land on the grid minimum
    let spread = [
        Vec3::new(0.05, 0.0, 0.0),
        Vec3::new(-0.03, 0.04, 0.01),
        Vec3::new(0.0, -0.05, 0.02),
        Vec3::new(0.01, 0.01, 0.06),
        Vec3::new(-0.02, -0.02, -0.05),
    ];
    let mut worst_grid = 0.0f64;
    for case in 0..10 {
        let mcps = spread.map(|m| {
            m + Vec3::new(
                rng.random_range(-0.005..0.005),
                rng.random_range(-0.005..0.005),
                rng.random_range(-0.005..0.005),
            )
        });
        let mut lengths = mcps.map(|m| m.norm());
        for l in &mut lengths {
            *l += rng.random_range(-0.004..0.004);
        }
        let init = Vec3::new(
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
            rng.random_range(-0.01..0.01),
        );
        let fit =
            optimize_wrist_position(&mcps, &lengths, init, opts).map_err(|e| e.to_string())?;
        let grid = grid_minimum(&mcps, &lengths, Vec3::zeros());
        let d = (grid - fit.wrist).norm();
        worst_grid = worst_grid.max(d);
        ensure(d <= 1e-4, || {
            format!(
                "inconsistent case {case}: solver {:?} grid {grid:?}",
                fit.wrist
            )
        })?;
    }
    Ok(format!(
        "max error {worst_pos:.1e} m, max objective {worst_obj:.1e}, grid gap {worst_grid:.1e} m"
    ))
}

// 3. Clip extraction

/// Every defect-free length-60 window, then earliest-first disjoint picks.
fn clip_oracle(n: usize, defects: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let candidates: Vec<usize> = (0..n.saturating_sub(59))
        .filter(|&s| (s..s + 60).all(|f| !defects.contains(&f)))
        .collect();
    let mut out = Vec::new();
    let mut free_from = 0;
    for s in candidates {
        if s >= free_from {
            out.push((s, s + 60));
            free_from = s + 60;
        }
    }
    out
}

fn clip_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ClipSpec::new(60);
    let mut clips = 0;
    for case in 0..1000 {
        let n = rng.random_range(0..=200usize);
        let k = rng.random_range(0..=3usize).min(n);
        let defects: BTreeSet<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        let got = extract_clips(
            n,
            &DefectReport::from_frames(defects.iter().copied()),
            &spec,
        )
        .map_err(|e| e.to_string())?;
        let want = clip_oracle(n, &defects);
        ensure(got == want, || {
            format!("case {case}: F={n} defects {defects:?}: {got:?} vs {want:?}")
        })?;
        // maximal count: every defect-free run holds floor(len / 60) clips
        let mut bounds: Vec<isize> = vec![-1];
        bounds.extend(defects.iter().map(|&d| d as isize));
        bounds.push(n as isize);
        let max: usize = bounds
            .windows(2)
            .map(|w| ((w[1] - w[0] - 1).max(0) as usize) / 60)
            .sum();
        ensure(got.len() == max, || {
            format!("case {case}: {} clips, {max} possible", got.len())
        })?;
        clips += got.len();
    }
    Ok(format!("1000 cases, {clips} clips, exact"))
}

// 4. Intensity

fn sinusoid_clip() -> MotionSequence {
    let base = rest_frame(0.2);
    let mcp = joint(Finger::Middle, Segment::Mcp);
    let frames: Vec<Frame> = (0..60)
        .map(|k| {
            let t = k as f64 / 30.0;
            let theta = (45.0 - 45.0 * (2.0 * std::f64::consts::PI * t).cos()).to_radians();
            let mut fr = base;
            let pose = &mut fr[Hand::Right.index()];
            let pre = (pose[mcp] - pose[WRIST]).normalize();
            let side = pre.cross(&Vec3::z()).normalize();
            pose[mcp + 1] = pose[mcp] + (pre * theta.cos() + side * theta.sin()) * 0.04;
            fr
        })
        .collect();
    MotionSequence::new_unchecked(30.0, frames, "sine")
}

fn intensity_filter() -> Outcome {
    let cfg = IntensityConfig::default();
    ensure(cfg.tau_hand == 25.0 && cfg.tau_avg == 30.0, || {
        "thresholds are not 25/30".into()
    })?;

    let still = static_sequence(rest_frame(0.2), 60, 30.0);
    let i = clip_intensity(&still, &cfg).map_err(|e| e.to_string())?;
    ensure(i.left == 0.0 && i.right == 0.0 && i.avg == 0.0, || {
        format!("static clip {i:?}")
    })?;
    ensure(!passes(&i, &cfg), || "static clip kept".into())?;

    let mut single = cfg;
    single.joint_weights = [0.0; JOINTS_PER_HAND];
    single.joint_weights[joint(Finger::Middle, Segment::Mcp)] = 1.0;
    let sine = clip_intensity(&sinusoid_clip(), &single).map_err(|e| e.to_string())?;
    let rel = (sine.right - 180.0).abs() / 180.0;
    ensure(rel <= 0.02, || format!("sinusoid {} deg/s", sine.right))?;

    // measured clips plus values on and around the thresholds
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pool: Vec<Intensity> = (0..20)
        .map(|k| {
            let seq = corpus_member(k, 60, 4);
            clip_intensity(&seq, &cfg).expect("synthetic clip")
        })
        .collect();
    let near = [
        24.0,
        25.0f64.next_down(),
        25.0,
        26.0,
        29.0,
        30.0f64.next_down(),
        30.0,
        31.0,
        40.0,
    ];
    for _ in 0..2000 {
        let (l, r) = (
            near[rng.random_range(0..near.len())],
            near[rng.random_range(0..near.len())],
        );
        let avg = if rng.random_bool(0.5) {
            0.5 * (l + r)
        } else {
            near[rng.random_range(0..near.len())]
        };
        pool.push(Intensity {
            left: l,
            right: r,
            avg,
        });
    }
    let kept = filter_clips(&pool, &cfg);
    let want: Vec<usize> = pool
        .iter()
        .enumerate()
        .filter(|(_, i)| i.left >= 25.0 && i.right >= 25.0 && i.avg >= 30.0)
        .map(|(k, _)| k)
        .collect();
    ensure(kept == want, || {
        "kept set differs from the three inequalities".into()
    })?;
    Ok(format!(
        "sinusoid {:.2} deg/s ({:.2}% off), kept {}/{}",
        sine.right,
        rel * 100.0,
        kept.len(),
        pool.len()
    ))
}

// 5. Events

fn event_segmentation() -> Outcome {
    let states = ["fully extend", "partially bent", "fully bent"];
    let id = DescriptorId::new(DescriptorKind::FingerFlexing, HandScope::Left, "index_pip");
    let mut cases = 0;
    for n in 1..=8u32 {
        for code in 0..3usize.pow(n) {
            let mut c = code;
            let labels: Vec<&str> = (0..n)
                .map(|_| {
                    let s = states[c % 3];
                    c /= 3;
                    s
                })
                .collect();
            let events = segment_events(&id, &labels, 1);
            let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
            ensure(events.len() == changes.max(1), || {
                format!("{labels:?}: {} events", events.len())
            })?;
            let back = reconstruct_labels(&events, labels.len())
                .map_err(|e| format!("{labels:?}: {e}"))?;
            ensure(back == labels, || format!("{labels:?} rebuilt as {back:?}"))?;

            let doc = FeatureDoc {
                fps: 30.0,
                num_frames: labels.len(),
                events,
            };
            let parsed = FeatureDoc::parse(&doc.to_json()).map_err(|e| e.to_string())?;
            ensure(parsed == doc, || {
                format!("{labels:?}: json round trip differs")
            })?;
            let again = reconstruct_labels(&parsed.events_for(&id), labels.len())
                .map_err(|e| e.to_string())?;
            ensure(again == labels, || {
                format!("{labels:?}: parsed events rebuild differently")
            })?;
            cases += 1;
        }
    }
    Ok(format!("{cases} label sequences, exact"))
}

// 6. Palm relation

fn full_sort(left: &[Vec3], right: &[Vec3]) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(left.len() * right.len());
    for (i, p) in left.iter().enumerate() {
        for (j, q) in right.iter().enumerate() {
            all.push(((q - p).norm_squared(), i, j));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    all.into_iter().map(|(_, i, j)| (i, j)).collect()
}

fn palm_translation() -> Outcome {
    // flat palms turned to face along x, so the offset runs along their normals
    let mut shape = HandShape::default();
    for m in &mut shape.mcp {
        m.z = 0.0;
    }
    let art = Articulation {
        flex: [[0.2, 0.3, 0.2]; 5],
        splay: [0.0; 5],
    };
    let turn = Rotation3::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2).into_inner();
    let mut fr = rest_frame(0.1);
    for hand in [Hand::Left, Hand::Right] {
        let x = if hand == Hand::Left { 0.0 } else { 0.1 };
        fr[hand.index()] = place(
            &local_pose(&shape, &art, hand),
            &turn,
            Vec3::new(x, 0.0, 0.0),
        );
    }
    let shift = Vec3::new(0.1, 0.0, 0.0);
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let left = palm_cloud(&fr, Hand::Left, seed).map_err(|e| e.to_string())?;
        let right = PalmCloud {
            points: left.points.iter().map(|p| p + shift).collect(),
            seed,
        };
        let v = palm_relation(&left, &right);
        let err = (v - shift).norm();
        worst = worst.max(err);
        ensure(err <= 0.005, || format!("seed {seed}: relation {v:?}"))?;

        let other = palm_cloud(&fr, Hand::Right, seed).map_err(|e| e.to_string())?;
        for (l, r) in [(&left, &right), (&left, &other)] {
            ensure(l.points.len() * r.points.len() == 10_000, || {
                "clouds must hold 100 points".into()
            })?;
            let got: Vec<(usize, usize)> = closest_pairs(&l.points, &r.points, 30)
                .iter()
                .map(|p| (p.left, p.right))
                .collect();
            let want = full_sort(&l.points, &r.points);
            ensure(got == want[..30], || {
                format!("seed {seed}: 30-pair selection differs")
            })?;
        }
    }
    Ok(format!("50 seeds, max error {:.2} mm", worst * 1000.0))
}

// 7. FSQ

fn fsq() -> Outcome {
    for l in [5u32, 9, 16] {
        let cfg = FsqConfig::new(vec![l]).map_err(|e| e.to_string())?;
        let bound = 0.5 / (l - 1) as f64;
        for k in 0..=200_000 {
            let y = -12.0 + 24.0 * k as f64 / 200_000.0;
            let q = cfg.quantize(&[y]).map_err(|e| e.to_string())?;
            let back = cfg.dequantize(&q).map_err(|e| e.to_string())?[0];
            let s = 1.0 / (1.0 + (-y).exp());
            // exact on the lattice scale, one rounding of slack after dividing
            let scaled = (s * (l - 1) as f64 - q[0] as f64).abs();
            ensure(scaled <= 0.5, || {
                format!("L={l} y={y}: lattice error {scaled}")
            })?;
            ensure((s - back).abs() <= bound * (1.0 + f64::EPSILON), || {
                format!("L={l} y={y}: error {} above {bound}", (s - back).abs())
            })?;
        }
    }
    for size in [512u64, 1024, 2048, 4096] {
        let cfg = FsqConfig::for_codebook(size).ok_or(format!("no factorization for {size}"))?;
        ensure(cfg.codebook_size().ok() == Some(size), || {
            format!("{size}: product is {:?}", cfg.codebook_size())
        })?;
        // enumerate the lattice independently, first dimension slowest
        let mut codes: Vec<Vec<u32>> = vec![vec![]];
        for &l in &cfg.levels {
            codes = codes
                .into_iter()
                .flat_map(|c| (0..l).map(move |v| [c.clone(), vec![v]].concat()))
                .collect();
        }
        let mut seen = vec![false; size as usize];
        for q in &codes {
            let i = cfg.code_index(q).map_err(|e| e.to_string())?;
            ensure(i < size && !seen[i as usize], || {
                format!("{size}: index {i} repeats or overflows")
            })?;
            seen[i as usize] = true;
            ensure(cfg.code_from_index(i).ok().as_ref() == Some(q), || {
                format!("{size}: {q:?} does not invert")
            })?;
        }
        ensure(seen.iter().all(|s| *s), || {
            format!("{size}: indices not onto")
        })?;
        ensure(cfg.code_from_index(size).is_err(), || {
            format!("{size}: index {size} accepted")
        })?;
    }
    Ok("levels 5/9/16 within bound, 512/1024/2048/4096 bijective".into())
}

// 8. Guidance

/// Linear ramp from `p_hard` at the center to `p_soft` at distance `k_trans`.
fn ramp(d: usize, cfg: &GuidanceConfig) -> f64 {
    if d > cfg.k_trans {
        0.0
    } else {
        cfg.p_hard - (cfg.p_hard - cfg.p_soft) * d as f64 / cfg.k_trans as f64
    }
}

/// Brute-force overlap: the strongest window, and the ramp value it came from.
fn oracle_gamma(centers: &BTreeSet<usize>, t: usize, cfg: &GuidanceConfig) -> (f64, f64) {
    centers
        .iter()
        .map(|&c| (window_weight(t, c, cfg), ramp(t.abs_diff(c), cfg)))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a })
}

fn test_motion(frames: usize) -> Tensor {
    let seq = corpus_member(0, frames, 8);
    let data = seq
        .frames
        .iter()
        .flatten()
        .flatten()
        .flat_map(|p| [p.x, p.y, p.z])
        .collect();
    Tensor::from_vec(frames, SAMPLE_JOINTS, 3, data).expect("tensor shape")
}

fn guidance() -> Outcome {
    let cfg = GuidanceConfig::default();
    ensure(
        (cfg.p_hard, cfg.p_soft, cfg.k_trans, cfg.k_inbet, cfg.k_hor) == (0.85, 0.10, 5, 5, 10),
        || format!("defaults {cfg:?}"),
    )?;
    let single = CenterSets::uniform(40, 1, &BTreeSet::from([20]));
    let g = gamma_field(&single, &cfg).map_err(|e| e.to_string())?;
    ensure(g.at(20, 0) == 0.85, || format!("center {}", g.at(20, 0)))?;
    for edge in [15, 25] {
        ensure(g.at(edge, 0) == 0.10, || format!("edge {}", g.at(edge, 0)))?;
    }
    for t in (0..15).chain(26..40) {
        ensure(g.at(t, 0) == 0.0, || {
            format!("frame {t} outside the window is {}", g.at(t, 0))
        })?;
    }

    // overlap: every center subset for short windows, several widths
    let mut subsets = 0;
    for len in 1..=20usize {
        for k_trans in [1usize, 2, 5] {
            let c = GuidanceConfig { k_trans, ..cfg };
            let masks: Box<dyn Iterator<Item = u32>> = if len <= 12 {
                Box::new(0..1u32 << len)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(len as u64);
                Box::new((0..4096).map(move |_| rng.random_range(0..1u32 << len)))
            };
            for mask in masks {
                let centers: BTreeSet<usize> = (0..len).filter(|b| mask >> b & 1 == 1).collect();
                let g = gamma_field(&CenterSets::uniform(len, 1, &centers), &c)
                    .map_err(|e| e.to_string())?;
                for t in 0..len {
                    let (want, linear) = oracle_gamma(&centers, t, &c);
                    ensure(g.at(t, 0) == want && (want - linear).abs() <= 1e-15, || {
                        format!(
                            "len {len} centers {centers:?} t {t}: {} vs {want}",
                            g.at(t, 0)
                        )
                    })?;
                }
                subsets += 1;
            }
        }
    }

    // the oracle denoiser makes every task return the ground truth
    let schedule = NoiseSchedule::default();
    let gt = test_motion(60);
    let mut worst = 0.0f64;
    for task in [
        Task::InBetween,
        Task::Keyframe(vec![0, 30, 59]),
        Task::WristTrajectory,
        Task::HandReaction(Hand::Right),
        Task::LongHorizon,
    ] {
        let target = match task {
            Task::LongHorizon => long_horizon_target(&gt, 60, &cfg).map_err(|e| e.to_string())?,
            _ => gt.clone(),
        };
        let gamma = gamma_field(
            &task_centers(&task, 60, &cfg).map_err(|e| e.to_string())?,
            &cfg,
        )
        .map_err(|e| e.to_string())?;
        let x_t = initial_noise(60, SAMPLE_JOINTS, 3, 11);
        let mut noise = SeededNoise::new(12);
        let out = guided_sample(
            |_, _| Ok(target.clone()),
            x_t,
            &target,
            &gamma,
            &schedule,
            &mut noise,
        )
        .map_err(|e| format!("{}: {e}", task.name()))?;
        let err = out
            .data
            .iter()
            .zip(&target.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("{}: error {err:e}", task.name()))?;
        let blended = blend_clean(&target, &target, &gamma).map_err(|e| e.to_string())?;
        ensure(
            blended
                .data
                .iter()
                .zip(&target.data)
                .all(|(a, b)| (a - b).abs() <= 1e-12),
            || format!("{}: blending the target with itself moved it", task.name()),
        )?;
    }

    for t in 1..=schedule.steps() {
        let out = renoise(&gt, t, &schedule, &mut ZeroNoise).map_err(|e| e.to_string())?;
        let a = schedule.alpha_bar[t - 1].sqrt();
        ensure(
            out.data.iter().zip(&gt.data).all(|(o, x)| *o == a * x),
            || format!("renoise at t={t}"),
        )?;
    }

    let n = 10_000;
    for seed in 0..10 {
        let mut xs = vec![0.0; n];
        SeededNoise::new(seed).fill(&mut xs);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        ensure(mean.abs() <= 4.0 / (n as f64).sqrt(), || {
            format!("seed {seed}: mean {mean}")
        })?;
        ensure((var - 1.0).abs() <= 0.05, || {
            format!("seed {seed}: variance {var}")
        })?;
    }
    Ok(format!("{subsets} center sets, oracle error {worst:.1e}"))
}

// 9. Contact

fn labels_with(inter: Vec<bool>) -> ContactLabels {
    ContactLabels {
        intra: vec![[[false; 4]; 2]; inter.len()],
        inter,
        threshold: CONTACT_THRESHOLD,
    }
}

fn contact_metrics() -> Outcome {
    ensure(CONTACT_THRESHOLD == 0.02, || "threshold is not 2 cm".into())?;
    ensure(PipelineConfig::default().contact_threshold == 0.02, || {
        "pipeline threshold is not 2 cm".into()
    })?;

    let span = |a: usize, b: usize| (0..40).map(|f| (a..=b).contains(&f)).collect::<Vec<_>>();
    let gt = labels_with(span(10, 20));
    let gen = labels_with(span(15, 25));
    let r = score(&gt, &gen).map_err(|e| e.to_string())?.inter;
    let want = 6.0 / 11.0;
    ensure((r.tp, r.fp, r.fn_) == (6, 5, 5), || format!("counts {r:?}"))?;
    ensure(
        r.precision == want && r.recall == want && r.f1 == want,
        || format!("scores {r:?}"),
    )?;

    let perfect = score(&gt, &gt).map_err(|e| e.to_string())?.inter;
    ensure(
        (perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0),
        || format!("perfect {perfect:?}"),
    )?;
    let complement = labels_with(gt.inter.iter().map(|b| !b).collect());
    let none = score(&gt, &complement).map_err(|e| e.to_string())?.inter;
    ensure(
        (none.precision, none.recall, none.f1) == (0.0, 0.0, 0.0),
        || format!("complement {none:?}"),
    )?;

    // the threshold as seen by the labeler: thumb tip just inside or outside
    let base = rest_frame(0.3);
    let index_tip = base[1][joint(Finger::Index, Segment::Tip)];
    for (d, want) in [(0.0199, true), (0.0201, false)] {
        let mut fr = base;
        fr[1][joint(Finger::Thumb, Segment::Tip)] = index_tip + Vec3::new(0.0, 0.0, d);
        let c = intra_contact_frame(&fr, CONTACT_THRESHOLD)[1][0];
        ensure(c == want, || format!("thumb-index at {d} m labeled {c}"))?;
    }
    Ok("P=R=F1=6/11, perfect 1, complement 0".into())
}

// 10. Pipeline

fn artifacts_equal(a: &Path, b: &Path) -> Result<usize, String> {
    let read = |p: &Path| Manifest::read(&p.join(MANIFEST_FILE)).map_err(|e| e.to_string());
    let (ma, mb) = (read(a)?, read(b)?);
    ensure(ma == mb, || "manifests differ".into())?;
    ensure(ma.complete, || "manifest incomplete".into())?;
    let raw = |p: &Path| fs::read(p.join(MANIFEST_FILE)).map_err(|e| e.to_string());
    ensure(raw(a)? == raw(b)?, || "manifest bytes differ".into())?;
    for art in &ma.artifacts {
        let x = fs::read(a.join(&art.path)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(&art.path)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{} differs", art.path))?;
    }
    Ok(ma.artifacts.len())
}

fn pipeline() -> Outcome {
    let frames = 1_000_000;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst = Duration::ZERO;
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let cfg = PipelineConfig {
            synth: Some(SynthSource {
                total_frames: frames,
                frames_per_seq: 1800,
                seed: 10,
            }),
            out_dir: dir.path().join(name),
            seed: 10,
            ..PipelineConfig::default()
        };
        let run = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        ensure(run.frames == frames, || {
            format!("{} frames processed", run.frames)
        })?;
        let t = |s| run.stage_time.get(&s).copied().unwrap_or_default();
        let de = t(Stage::Describe) + t(Stage::Events);
        worst = worst.max(de);
        let total: Duration = run.stage_time.values().sum();
        summaries.push(format!(
            "{:.1}s/{:.1}s",
            de.as_secs_f64(),
            total.as_secs_f64()
        ));
        if name == "a" {
            ensure(run.kept_clips > 0, || "no clip survived the filter".into())?;
        }
    }
    let n = artifacts_equal(&dir.path().join("a"), &dir.path().join("b"))?;
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let detail = format!(
        "{n} artifacts identical; describe+events / all stages {} on {cores} core(s)",
        summaries.join(", ")
    );
    ensure(worst < Duration::from_secs(120), || {
        format!("describe+events took {worst:?}; {detail}")
    })?;
    Ok(detail)
}

// 11. Representations

fn representations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_ar, mut worst_rot) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let base = corpus_member(k, 40, 11);
        let rigid = RigidTransform::new(
            random_rotation(&mut rng),
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
        );
        let seq = base.transformed(&rigid);

        let rep = to_ar_rep(&seq).map_err(|e| format!("seq {k}: {e}"))?;
        let flat = rep.to_flat();
        let rep = ArLocalRep::from_flat(&rep.layout(), &flat).map_err(|e| e.to_string())?;
        let back = from_ar_rep(&rep, &left_wrist_path(&seq), "back").map_err(|e| e.to_string())?;
        for (a, b) in back.frames.iter().zip(&seq.frames) {
            for (p, q) in a.iter().flatten().zip(b.iter().flatten()) {
                worst_ar = worst_ar.max((p - q).norm());
            }
        }
        ensure(worst_ar <= 1e-6, || {
            format!("seq {k}: AR error {worst_ar:e}")
        })?;

        let pos = to_diffusion_rep(&seq)
            .positions("pos")
            .map_err(|e| e.to_string())?;
        ensure(pos.frames == seq.frames, || {
            format!("seq {k}: diffusion positions not bit-exact")
        })?;

        for (a, b) in base.frames.iter().zip(&seq.frames) {
            for h in 0..2 {
                let (sa, _) = hand_scalars(&a[h]);
                let (sb, _) = hand_scalars(&b[h]);
                for (x, y) in sa.iter().zip(&sb) {
                    worst_rot = worst_rot.max((x - y).abs());
                }
            }
        }
        ensure(worst_rot <= 1e-9, || {
            format!("seq {k}: rotation scalar moved {worst_rot:e} deg")
        })?;
    }
    Ok(format!(
        "AR error {worst_ar:.1e} m, scalar drift {worst_rot:.1e} deg"
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "state table",
            budget: Duration::from_secs(1),
            run: state_table,
        },
        Criterion {
            id: 2,
            name: "wrist solver",
            budget: Duration::from_secs(30),
            run: wrist_solver,
        },
        Criterion {
            id: 3,
            name: "clip extraction",
            budget: Duration::from_secs(10),
            run: clip_extraction,
        },
        Criterion {
            id: 4,
            name: "intensity filter",
            budget: Duration::from_secs(5),
            run: intensity_filter,
        },
        Criterion {
            id: 5,
            name: "event segmentation",
            budget: Duration::from_secs(10),
            run: event_segmentation,
        },
        Criterion {
            id: 6,
            name: "palm relation",
            budget: Duration::from_secs(5),
            run: palm_translation,
        },
        Criterion {
            id: 7,
            name: "fsq",
            budget: Duration::from_secs(5),
            run: fsq,
        },
        Criterion {
            id: 8,
            name: "guidance",
            budget: Duration::from_secs(20),
            run: guidance,
        },
        Criterion {
            id: 9,
            name: "contact metrics",
            budget: Duration::from_secs(1),
            run: contact_metrics,
        },
        Criterion {
            id: 10,
            name: "pipeline",
            budget: Duration::MAX,
            run: pipeline,
        },
        Criterion {
            id: 11,
            name: "representations",
            budget: Duration::MAX,
            run: representations,
        },
    ];
    let picked: BTreeSet<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| picked.is_empty() || picked.contains(&c.id))
    {
        let t0 = Instant::now();
        let outcome = (c.run)();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(d) if took > c.budget => Err(format!("{d}; over the {:?} budget", c.budget)),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "{tag} {:>2} {:<20} {:>8.2}s  {detail}",
            c.id,
            c.name,
            took.as_secs_f64()
        );
        failed += outcome.is_err() as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
