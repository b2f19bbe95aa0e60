use dersched_core::baselines::BaselineConfig;
use dersched_core::harness::*;
use dersched_core::model::{BatterySpec, ExogenousTrace, TariffSchedule};

fn spec() -> ScenarioSpec {
    let horizon = 24;
    let demand = daily_demand_profile(1.0, horizon);
    let gen = sine_day_generation(2.0, horizon);
    let trace = ExogenousTrace::new(gen, Some(demand.clone())).unwrap();
    let tariff = TariffSchedule::flat(horizon, 0.12, 0.06, 10.0, 0.09).unwrap();
    let fleet = calibrate_fleet(&demand, 0.12, -0.1).unwrap();
    let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
    ScenarioSpec {
        tariff, fleet, battery, trace,
        trace_source: "synthetic".into(), initial_soc: 5.0,
        baseline: BaselineConfig::default(), policies: Policy::all(),
        forecast_sigma: 0.0, seed: 42,
    }
}

fn main() {
    let base = spec();
    let plans = [
        SweepPlan { axis: SweepAxis::BatteryCapacity, values: vec![2.0, 5.0, 10.0, 20.0, 40.0] },
        SweepPlan { axis: SweepAxis::Salvage, values: vec![0.03, 0.09, 0.17, 0.5, 2.0] },
        SweepPlan { axis: SweepAxis::ExportRate, values: vec![0.0, 0.03, 0.06, 0.09, 0.12] },
        SweepPlan { axis: SweepAxis::PeakPrice, values: vec![0.0, 1.0, 2.0, 5.0, 10.0] },
    ];
    let mut wins = 0usize;
    let mut cells = 0usize;
    for plan in &plans {
        let report = sweep(&base, plan).unwrap();
        for s in &report.scenarios {
            let o = s.row("oracle").unwrap().surplus;
            let l = s.row("lsps").unwrap().surplus;
            let r = s.row("ratp").unwrap().surplus;
            let b = s.row("backup").unwrap().surplus;
            let ok = l >= r && l >= b;
            cells += 1;
            if ok { wins += 1; }
            println!("{:22} O {:9.3} L {:9.3} R {:9.3} B {:9.3} {}", s.label, o, l, r, b, if ok {""} else {"  <-- LSPS loses"});
        }
        println!("  mean gaps: lsps {:?} ratp {:?} backup {:?}",
            report.mean_gap_pct("lsps"), report.mean_gap_pct("ratp"), report.mean_gap_pct("backup"));
    }
    println!("LSPS wins {wins}/{cells}");
}
