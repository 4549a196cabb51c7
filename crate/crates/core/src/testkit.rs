//! Deterministic panel generators for unit tests.
//!
//! Panels come from the simulation designs so that the likelihood is well
//! posed; the replication index is searched until screening is a no-op and
//! both link families fit cleanly.

use crate::link::LinkFamily;
use crate::mc::{simulate, DgpKind, DgpSpec};
use crate::mle::{fit_mle, screen_separation, FitControls};
use crate::panel::PanelDataset;

fn well_posed(ds: &PanelDataset) -> bool {
    [LinkFamily::Logit, LinkFamily::Probit]
        .into_iter()
        .all(|link| {
            fit_mle(ds, link, &FitControls::default())
                .map(|fit| fit.deviance > 1e-3 * fit.n as f64)
                .unwrap_or(false)
        })
}

fn search(spec: &DgpSpec) -> PanelDataset {
    for rep in 0..200 {
        let sim = simulate(spec, rep);
        // Screening is idempotent, so the screened panel is no-drop.
        let Ok((screened, report)) = screen_separation(&sim.dataset) else {
            continue;
        };
        if report.rows_dropped * 2 < sim.dataset.n_rows() && well_posed(&screened) {
            return screened;
        }
    }
    panic!(
        "no well-posed {} panel found for n={}, t={}",
        spec.kind.label(),
        spec.n,
        spec.t
    );
}

/// Static three-way panel with mixed cells and a well-posed likelihood.
/// Results are cached per (n, t, seed) for the test process.
pub fn clean_static_panel(n: usize, t: usize, seed: u64) -> PanelDataset {
    cached(DgpKind::Static3way, n, t, seed)
}

/// Dynamic three-way panel (lag as first regressor), same guarantees.
pub fn clean_dynamic_panel(n: usize, t: usize, seed: u64) -> PanelDataset {
    cached(DgpKind::Dynamic3way, n, t, seed)
}

fn cached(kind: DgpKind, n: usize, t: usize, seed: u64) -> PanelDataset {
    use std::collections::HashMap;
    use std::sync::Mutex;
    static CACHE: Mutex<Option<HashMap<(u8, usize, usize, u64), PanelDataset>>> = Mutex::new(None);
    let key = (kind as u8, n, t, seed);
    let mut guard = CACHE.lock().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    if let Some(ds) = map.get(&key) {
        return ds.clone();
    }
    let ds = search(&DgpSpec::new(kind, n, t, seed));
    map.insert(key, ds.clone());
    ds
}
