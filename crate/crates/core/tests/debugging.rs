mod common;

use common::*;
use pipewright::model::Stage;

#[test]
fn injected_defects_classify_and_repair() {
    let mut wrong = Vec::new();
    for d in defects() {
        let set = d.fixtures(1);
        let mut cfg = config(set.path());
        cfg.debug_budget = 1;
        let out = tempfile::tempdir().unwrap();
        let o = run_toy(&cfg, out.path());
        let cls = classifications(&o.layout, "traditional");
        let got = cls.first().map(|c| (c.class, c.infra_flag));
        println!("{:<28} {:?} {:?}", d.name, got, cls.first().map(|c| &c.violated_constraints));
        if got != Some((d.class, d.infra)) || !o.report.succeeded() {
            wrong.push(d.name);
        }
    }
    assert!(wrong.is_empty(), "misclassified or unrepaired: {wrong:?}");
}

#[test]
fn repair_leaves_the_other_stage_alone() {
    for d in defects().into_iter().filter(|d| d.name.ends_with("row_relation")) {
        let set = d.fixtures(2);
        let mut cfg = config(set.path());
        cfg.debug_budget = 3;
        let out = tempfile::tempdir().unwrap();
        let o = run_toy(&cfg, out.path());
        let run = track_run(&o.layout, "traditional");
        let other = match d.class.faulty_stage() {
            Stage::Preprocessing => Stage::Modeling,
            _ => Stage::Preprocessing,
        };
        let revs = &run.modules[&other];
        assert!(revs.windows(2).all(|w| w[0].source_text == w[1].source_text), "{}", d.name);
        assert_eq!(run.modules[&d.class.faulty_stage()].len(), 3, "{}", d.name);
    }
}
