use std::time::Instant;
use dersched_core::harness::{calibrate_fleet, sine_day_generation};
use dersched_core::lsps::LspsPlanner;
use dersched_core::model::{BatterySpec, ExogenousTrace, TariffSchedule};

fn main() {
    for &horizon in &[240usize, 2400, 24000] {
        let trace = ExogenousTrace::new(sine_day_generation(2.0, horizon), None).unwrap();
        let tariff = TariffSchedule::flat(horizon, 0.12, 0.06, 10.0, 0.09).unwrap();
        let fleet = calibrate_fleet(&vec![1.0; horizon], 0.12, -0.1).unwrap();
        let battery = BatterySpec::new(5.0, 1.0, 1.0, 0.95, 0.95).unwrap();
        // warmup
        let planner = LspsPlanner::new(&trace, &tariff, &fleet, &battery).unwrap();
        let _ = planner.schedule(0.0).unwrap();
        let mut best = (f64::MAX, f64::MAX, f64::MAX);
        for _ in 0..5 {
            let t0 = Instant::now();
            let planner = LspsPlanner::new(&trace, &tariff, &fleet, &battery).unwrap();
            let t1 = Instant::now();
            let report = planner.find_c_star();
            let t2 = Instant::now();
            let schedule = planner.schedule(0.0).unwrap();
            let t3 = Instant::now();
            std::hint::black_box((report.c_star, schedule.clip_events));
            best.0 = best.0.min((t1 - t0).as_secs_f64() * 1e3);
            best.1 = best.1.min((t2 - t1).as_secs_f64() * 1e3);
            best.2 = best.2.min((t3 - t2).as_secs_f64() * 1e3);
        }
        println!("T={horizon:6} new {:8.3} ms, find_c_star {:8.3} ms, schedule {:8.3} ms", best.0, best.1, best.2);
    }
}
