use proptest::prelude::*;
use std::path::PathBuf;

use wlqmc::{ModelParams, PlateauCriteria, RunPlan};
use wlqmc_cli::config::RunConfig;

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let model = (1usize..200, 0usize..100, 0usize..100, 1e-3f64..10.0, 1e-3f64..10.0, 0.0f64..100.0, 0.0f64..100.0, 1e-3f64..5.0, 1usize..400, 1usize..9);
    let scan = prop::collection::vec(0.0f64..1.0, 1..6);
    let plan = (any::<u64>(), 1u64..1_000_000, 1u64..10_000_000, 1u64..10, 1usize..1000, 1usize..16);
    let rest = ("[a-z][a-z0-9_/.-]{0,20}", 1e-3f64..0.4, 1e-3f64..1.0, 1usize..50, 0u64..100_000);
    (model, scan, plan, rest).prop_map(|(m, v_c_list, pl, r)| RunConfig {
        params: ModelParams {
            sites: m.0,
            n_bosons: m.1,
            n_fermions: m.2,
            t_b: m.3,
            t_f: m.4,
            u_bb: m.5,
            u_bf: m.6,
            v_c: v_c_list[0],
            temperature: m.7,
            trotter: m.8,
            n_max: m.9,
        },
        v_c_list,
        plan: RunPlan { seed: pl.0, therm_sweeps: pl.1, measure_sweeps: pl.2, measure_interval: pl.3, bin_size: pl.4, chains: pl.5 },
        out: PathBuf::from(r.0),
        plateau: PlateauCriteria { density_tol: r.1, kappa_frac: r.2, min_sites: r.3 },
        checkpoint_every: r.4,
    })
}

proptest! {
    #[test]
    fn parse_serialize_parse(cfg in arb_config()) {
        let text = cfg.serialize();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), text);
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
