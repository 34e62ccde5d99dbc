use fracreact::output::RunWriter;
use fracreact::splitting::TimeGrid;
use fracreact::{advance_step, find_scenario, run, OutputSink, Scenario};

fn scenario(name: &str, steps: usize) -> Scenario {
    find_scenario(name).unwrap().config().unwrap().with_steps(steps).unwrap().build().unwrap()
}

fn balance_bytes(s: &Scenario, dir: &std::path::Path) -> Vec<u8> {
    let mut writer = RunWriter::new(dir, &s.name, &s.mesh, &s.model.topo, 0, s.grid.steps, false).unwrap();
    {
        let mut sinks: [&mut dyn OutputSink; 1] = [&mut writer];
        run(&s.model, s.initial.clone(), &s.grid, &mut sinks).unwrap();
    }
    std::fs::read(writer.balance_path()).unwrap()
}

#[test]
fn single_step_run_equals_advance_step() {
    let s = scenario("single_fracture_injection", 60);
    let grid = TimeGrid::new(s.grid.dt(), 1).unwrap();
    let outcome = run(&s.model, s.initial.clone(), &grid, &mut []).unwrap();
    let (direct, mut report) = advance_step(&s.model, &s.initial, s.grid.dt(), 1).unwrap();
    report.time = s.grid.dt();
    assert_eq!(outcome.state, direct);
    assert_eq!(outcome.reports.len(), 2);
    assert_eq!(outcome.reports[1], report);
}

#[test]
fn reruns_write_identical_balance_tables() {
    let s = scenario("multi_fracture_injection", 5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = balance_bytes(&s, a.path());
    assert!(!first.is_empty());
    assert_eq!(first, balance_bytes(&s, b.path()));
}

#[test]
fn clogging_fracture_chokes_the_outflow() {
    let s = scenario("single_fracture_injection", 60);
    let reports = run(&s.model, s.initial.clone(), &s.grid, &mut []).unwrap().reports;
    let start = reports[1].fluid_outflow;
    let end = reports.last().unwrap().fluid_outflow;
    assert!(start > 0.0);
    assert!(end < 0.5 * start, "outflow {start:e} -> {end:e}");
}
