use nalgebra::{DMatrix, DVector};
use proxrl::envs;
use proxrl::geometry::BregmanGeometry;
use proxrl::mdp::{FeatureBasis, IidSampler, MarkovRewardProcess};
use proxrl::schedule::StepSize;
use proxrl::td_mirror::{self, TdIterate};

fn build(sigma: f64) -> (MarkovRewardProcess, FeatureBasis) {
    let (mrp, basis) = envs::gridworld_noisy(5, 50, 11).unwrap();
    // rescale noise block
    if let FeatureBasis::NoiseAugmented { base, noise } = basis {
        let noise: DMatrix<f64> = noise * sigma;
        (mrp, FeatureBasis::NoiseAugmented { base, noise })
    } else {
        unreachable!()
    }
}

fn main() {
    for sigma in [0.1, 0.2, 0.3] {
        let (mrp, basis) = build(sigma);
        let d = basis.dim();
        let gamma = mrp.gamma();
        let v = mrp.true_values();
        for a0 in [0.1, 0.3] {
            for beta in [0.02, 0.05, 0.1] {
                let mut iter = TdIterate::new(d, StepSize::InvSqrt(a0), 0.0, BregmanGeometry::euclidean())
                    .unwrap()
                    .with_sparsity(beta)
                    .unwrap();
                let mut sampler = IidSampler::new(&mrp, &basis, 2).unwrap();
                for _ in 0..50_000 {
                    let s = sampler.sample();
                    iter = td_mirror::sparse_mirror_td_step(&iter, &s, gamma).unwrap();
                }
                let signal: f64 = iter.w.rows(0, 25).iter().map(|x| x.abs()).sum();
                let noise: f64 = iter.w.rows(25, d - 25).iter().map(|x| x.abs()).sum();
                let fit: DVector<f64> = basis.matrix().unwrap() * &iter.w;
                let rel = (&fit - &v).norm() / v.norm();
                println!(
                    "sigma={sigma} a0={a0:<4} beta={beta:<5} ratio={:.4} fit_rel={rel:.3}",
                    noise / signal
                );
            }
        }
    }
}
