use dersched_core::dp_validator::*;
use dersched_core::model::{BatterySpec, Device, DeviceFleet, TariffSchedule};

fn main() {
    let horizon = 2;
    let instance = LatticeInstance {
        tariff: TariffSchedule::flat(horizon, 0.2, 0.05, 0.3, 0.1).unwrap(),
        fleet: DeviceFleet::new(vec![Device::constant(0.5, 1.0, 1.0, horizon).unwrap()], horizon).unwrap(),
        battery: BatterySpec::new(2.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
        process: GenerationProcess::Deterministic(vec![0.8, 0.2]),
    };
    let table = backward_induction(&instance, LatticeGrids::default()).unwrap();
    let ns = table.soc_grid.len();
    let nc = table.peak_grid.len();
    for t in 0..table.horizon {
        for ci in [0usize, nc/2, nc-1] {
            print!("t={t} c={:.2}: ", table.peak_grid[ci]);
            for si in 0..ns {
                let flat = si * nc + ci;
                let e = table.battery_action[t][flat];
                let tgt = table.target_soc[t][flat];
                print!("({:.2},{:+.2},{}) ", table.soc_grid[si], e, tgt);
            }
            println!();
        }
    }
    let thr = extract_thresholds(&table);
    println!("{thr:?}");
}
