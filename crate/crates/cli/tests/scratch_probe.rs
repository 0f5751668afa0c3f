// Temporary calibration probe; removed before shipping.
use crsched::channel::GainDistribution;
use crsched::config::{PolicyKind, SimConfig};
use crsched::engine;
use crsched::rng::replication_seed;
use crsched_cli::{lambda_grid_for_loads, su_service_moments};

fn desk_base() -> SimConfig {
    let mut cfg = SimConfig::base(5);
    cfg.packet_bits = 50.0;
    cfg.delay_bounds = vec![250.0, 250.0, 250.0, 250.0, 45.0];
    let mut g = vec![GainDistribution::TruncatedExp { mean: 0.1, max: 1.0 }; 5];
    g[4] = GainDistribution::TruncatedExp { mean: 0.4, max: 4.0 };
    cfg.g = g;
    cfg.warmup_frames = 500;
    cfg
}

#[test]
fn probe_dominance() {
    let mut base = desk_base();
    // Loose bounds: the scheduler competes on sum delay alone.
    base.delay_bounds = vec![500.0; 5];
    base.warmup_frames = 1000;
    let grid = lambda_grid_for_loads(&base, &[0.1, 0.3, 0.5, 0.7, 0.85]).unwrap();
    for (rho, lb) in grid {
        let mut sums = vec![];
        let mut per_su_first = vec![];
        for policy in [PolicyKind::Doic, PolicyKind::Csma, PolicyKind::Cnc] {
            let mut per_policy = vec![];
            for rep in 0..4u64 {
                let mut cfg = base.clone();
                cfg.lambdas = (1..=5).map(|i| i as f64 * lb).collect();
                cfg.policy = policy;
                cfg.horizon_slots = 1_000_000;
                cfg.seed = replication_seed(1, rep);
                let r = engine::run(&cfg).unwrap();
                per_policy.push(r.sum_w_bar.unwrap());
                if rep == 0 {
                    per_su_first.push((
                        policy,
                        r.per_su.iter().map(|s| s.w_bar.unwrap()).collect::<Vec<_>>(),
                    ));
                }
            }
            let mean = per_policy.iter().sum::<f64>() / per_policy.len() as f64;
            sums.push(mean);
        }
        println!(
            "rho={rho}: doic={:.2} csma={:.2} cnc={:.2} | gap vs csma {:.1}% vs cnc {:.1}%",
            sums[0],
            sums[1],
            sums[2],
            (sums[1] / sums[0] - 1.0) * 100.0,
            (sums[2] / sums[0] - 1.0) * 100.0
        );
        for (p, ws) in &per_su_first {
            println!(
                "   {:?}: {:?}",
                p,
                ws.iter().map(|w| (w * 10.0).round() / 10.0).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn probe_criterion5_stability() {
    let base = desk_base();
    let moments = su_service_moments(&base).unwrap();
    println!("E[s] = {:?}", moments.iter().map(|m| m.mean_slots).collect::<Vec<_>>());
    for rho in [0.1, 0.4, 0.8] {
        let grid = lambda_grid_for_loads(&base, &[rho]).unwrap();
        let lb = grid[0].1;
        let lambda5 = 5.0 * lb;
        let k_target = (100.0 / (lambda5 * 0.045)).ceil() as u64;
        let mut cfg = base.clone();
        cfg.lambdas = (1..=5).map(|i| i as f64 * lb).collect();
        cfg.horizon_slots = 1000;
        cfg.min_frames = (k_target * 13) / 10;
        cfg.warmup_frames = 2000;
        cfg.seed = 11;
        let t0 = std::time::Instant::now();
        let r = engine::run(&cfg).unwrap();
        let y5 = r.y_over_k_final.as_ref().unwrap()[4];
        println!(
            "rho={rho}: lambda5={lambda5:.5} k_target={k_target} frames={} slots={} w5={:?} y5/K={:.4} fts={:?} dt={:?}",
            r.frames,
            r.slots,
            r.w_bar(4),
            y5,
            r.frames_to_stability,
            t0.elapsed()
        );
    }
}

#[test]
fn probe_criterion7_vtrend() {
    let mut base = SimConfig::base(2);
    base.packet_bits = 50.0;
    base.lambdas = vec![0.03, 0.04];
    base.delay_bounds = vec![100.0, 16.0];
    base.g = vec![
        GainDistribution::TruncatedExp { mean: 0.1, max: 1.0 },
        GainDistribution::TruncatedExp { mean: 0.4, max: 4.0 },
    ];
    base.warmup_frames = 2000;
    for v in [10.0f64, 100.0, 1000.0] {
        let k_target = (v / (0.03 * 0.045)).ceil() as u64;
        let mut sums = vec![];
        let mut fts = vec![];
        let t0 = std::time::Instant::now();
        for rep in 0..3u64 {
            let mut cfg = base.clone();
            cfg.v = v;
            cfg.horizon_slots = 1000;
            cfg.min_frames = (k_target * 13) / 10;
            cfg.seed = replication_seed(5, rep);
            let r = engine::run(&cfg).unwrap();
            sums.push(r.sum_w_bar.unwrap());
            fts.push(r.frames_to_stability);
        }
        println!(
            "V={v}: sum_w={:?} fts={:?} k_target={k_target} dt={:?}",
            sums,
            fts,
            t0.elapsed()
        );
    }
}
