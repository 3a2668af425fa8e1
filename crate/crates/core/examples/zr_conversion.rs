//! Reflectivity, rain rate and the 14 intensity classes.

use nowcast::data::{normalize, rain_rate_to_reflectivity, reflectivity_to_rain_rate, ClassTable, RainFrame};

fn main() -> nowcast::Result<()> {
    for dbz in [-32.0, 10.0, 20.0, 35.0, 50.0] {
        let r = reflectivity_to_rain_rate(dbz);
        println!("{dbz:>6.1} dBZ -> {r:>8.3} mm/h -> {:>6.1} dBZ", rain_rate_to_reflectivity(r)?);
    }

    let table = ClassTable::default();
    let rates = vec![0.0, 0.05, 0.3, 1.2, 4.0, 12.0, 40.0, 150.0];
    let frame = RainFrame::from_rates(2, 4, rates.clone())?;
    let classes = table.quantize(&frame)?;
    let back = table.dequantize(&classes)?;
    let unit = normalize(&classes)?;
    println!("\n  rate  class  representative  normalized");
    for i in 0..rates.len() {
        println!(
            "{:>6.2}  {:>5}  {:>14.3}  {:>10.3}",
            rates[i],
            classes.classes()?[i],
            back.rates()?[i],
            unit.normalized()?[i]
        );
    }
    Ok(())
}
