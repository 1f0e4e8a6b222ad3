use pilotwave::signal::*;
use pilotwave::guidance::*;
use pilotwave::ensemble::sample_born;

fn main() {
    let cfg = SignalExperiment::reference();
    let dom = cfg.domain();
    let fu = OscillatorPairField::new(1.0, 1.0, cfg.relative_phase, 1.0, 0.0, dom, 64).unwrap();
    let fs = OscillatorPairField::new(1.0, 1.0, cfg.relative_phase, cfg.switch_frequency, 0.0, dom, 64).unwrap();
    let ens = sample_born(&fu, 0.0, 1000, 5).unwrap();
    let times = [0.0, 0.05, 0.0707, 0.1, 0.1414, 0.2, 0.2828, 0.4, 0.5657, 0.8];
    let mut sums = vec![0.0f64; times.len()];
    for &x0 in ens.points().iter().take(400) {
        let (pu, _, _) = integrate_through(&fu, x0, &times, 1e-9).unwrap();
        let (ps, _, _) = integrate_through(&fs, x0, &times, 1e-9).unwrap();
        for k in 1..times.len() {
            sums[k] += (ps[k][0] - pu[k][0]).abs();
        }
    }
    println!("mean |dxA| per time and local log-log slope:");
    let mut prev = 0.0;
    for k in 1..times.len() {
        let mean = sums[k] / 400.0;
        let slope = if prev > 0.0 { (mean / prev).ln() / (times[k] / times[k-1]).ln() } else { 0.0 };
        println!("  t={:.4}: {:.4e}  slope={:.2}", times[k], mean, slope);
        prev = mean;
    }
}
