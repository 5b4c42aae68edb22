//! CSV tables.
//!
//! Simulation traces have one row per period. After `period` come eight
//! columns per channel, channel 0 first:
//! `start_j, order_j, primary_j, received_j, sales_j, lost_j, end_j, profit_j`,
//! then `avg_profit_j` for every channel, the running mean of period profit
//! with the warm-up excluded (empty during the warm-up).

use std::io::Write;

use invgame_core::market::ConditionReport;
use invgame_core::sim::{SimTrace, WARM_UP};
use invgame_core::stackelberg::CurvePoint;
use invgame_core::EquilibriumReport;

pub const TRACE_FIELDS: [&str; 8] = ["start", "order", "primary", "received", "sales", "lost", "end", "profit"];

pub fn trace_header(channels: usize) -> Vec<String> {
    let mut h = vec!["period".to_string()];
    for j in 0..channels {
        h.extend(TRACE_FIELDS.iter().map(|f| format!("{f}_{j}")));
    }
    h.extend((0..channels).map(|j| format!("avg_profit_{j}")));
    h
}

pub fn write_trace<W: Write>(out: W, tr: &SimTrace) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(tr.channels))?;
    let running: Vec<Vec<f64>> = (0..tr.channels).map(|j| tr.running_average(j)).collect();
    for (t, p) in tr.periods().enumerate() {
        let mut row = vec![t.to_string()];
        for j in 0..tr.channels {
            for v in [p.start[j], p.order[j], p.primary[j], p.received[j], p.sales[j], p.lost[j], p.end[j], p.profit[j]] {
                row.push(v.to_string());
            }
        }
        for avg in &running {
            row.push(if t < WARM_UP { String::new() } else { avg[t - WARM_UP].to_string() });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(out: W, curve: &[CurvePoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["leader_stock", "profit", "std_error"])?;
    for c in curve {
        w.write_record([c.leader_stock.to_string(), c.profit.to_string(), c.std_error.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_equilibrium<W: Write>(out: W, r: &EquilibriumReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "stock", "profit", "std_error", "residual"])?;
    for j in 0..r.stocks.len() {
        w.write_record([
            j.to_string(),
            r.stocks[j].to_string(),
            r.profits[j].value.to_string(),
            r.profits[j].std_error.to_string(),
            r.residuals[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_conditions<W: Write>(out: W, r: &ConditionReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "holds", "slack"])?;
    w.write_record(["c1".to_string(), r.c1.holds.to_string(), r.c1.slack.to_string()])?;
    w.write_record(["c2".to_string(), r.c2.holds.to_string(), r.c2.slack.to_string()])?;
    for (i, c) in r.c3.iter().enumerate() {
        w.write_record([format!("c3_{}", i + 1), c.holds.to_string(), c.slack.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
