use glmfe::ape::{ape_direct, ape_longrun, Evaluation};
use glmfe::link::LinkFamily;
use glmfe::mc::{simulate, DgpKind, DgpSpec};
use glmfe::mle::{fit_mle, FitControls};

#[test]
#[ignore]
fn probe_ape_conventions() {
    let spec = DgpSpec::new(DgpKind::Dynamic3way, 50, 10, 20240601);
    let (mut bias_kept_z, mut bias_full_z) = (0.0, 0.0);
    let (mut bias_kept_y, mut bias_full_y) = (0.0, 0.0);
    let (mut bias_kept_lr, mut bias_full_lr) = (0.0, 0.0);
    let reps = 6usize;
    for rep in 0..reps {
        let sim = simulate(&spec, rep as u64);
        let n_full = sim.dataset.n_rows();
        let p = sim.dataset.n_regressors();
        let fit = fit_mle(&sim.dataset, LinkFamily::Probit, &FitControls::default()).unwrap();
        let kept = &fit.dropped.kept_rows;
        let frac = kept.len() as f64 / n_full as f64;
        let eval = Evaluation::from_fit(&fit);
        let d = ape_direct(&eval).unwrap();
        let lr = ape_longrun(&eval).unwrap();
        let all: Vec<usize> = (0..n_full).collect();
        let t_kept_y = sim.truth.ape_direct_mean(0, p, kept);
        let t_kept_z = sim.truth.ape_direct_mean(1, p, kept);
        let t_full_y = sim.truth.ape_direct_mean(0, p, &all);
        let t_full_z = sim.truth.ape_direct_mean(1, p, &all);
        let t_kept_lr = sim.truth.ape_longrun_mean(kept).unwrap();
        let t_full_lr = sim.truth.ape_longrun_mean(&all).unwrap();
        bias_kept_z += (d.estimates[1] - t_kept_z) / t_kept_z;
        bias_full_z += (frac * d.estimates[1] - t_full_z) / t_full_z;
        bias_kept_y += (d.estimates[0] - t_kept_y) / t_kept_y;
        bias_full_y += (frac * d.estimates[0] - t_full_y) / t_full_y;
        bias_kept_lr += (lr.estimates[0] - t_kept_lr) / t_kept_lr;
        bias_full_lr += (frac * lr.estimates[0] - t_full_lr) / t_full_lr;
        eprintln!("rep {rep}: kept fraction {frac:.3}");
    }
    let r = reps as f64;
    eprintln!("MLE ape-z  bias%: kept-sample {:6.2}  zero-limit-full {:6.2}  (reference 4.11)", 100.0*bias_kept_z/r, 100.0*bias_full_z/r);
    eprintln!("MLE ape-y  bias%: kept-sample {:6.2}  zero-limit-full {:6.2}  (reference -70.30)", 100.0*bias_kept_y/r, 100.0*bias_full_y/r);
    eprintln!("MLE ape-lr bias%: kept-sample {:6.2}  zero-limit-full {:6.2}  (reference -4.15)", 100.0*bias_kept_lr/r, 100.0*bias_full_lr/r);
}
