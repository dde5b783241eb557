use nolor_core::eval::{self, SpeedupEntry};
use serde_json::{json, Value};

use super::{percent, Ctx, EVAL_REPORT, SPEEDUP_LOG};
use crate::error::CliResult;
use crate::files;

/// Speedup table over every recorded timing, plus the latest evaluation.
pub fn report(ctx: &Ctx) -> CliResult<()> {
    let project = ctx.project()?;
    let reports = project.reports_dir();
    let entries: Vec<SpeedupEntry> = files::read_jsonl(&reports.join(SPEEDUP_LOG))?;
    // the last record of an evaluation report is its summary
    let latest_eval: Option<Value> = files::read_jsonl::<Value>(&reports.join(EVAL_REPORT))?.pop();

    let mut human = String::new();
    let speedup_json: Vec<Value> = if entries.is_empty() {
        human.push_str("no data: no transcription timings recorded (see `accept --minutes-without/--minutes-with`)\n");
        Vec::new()
    } else {
        human.push_str(&eval::speedup_report(&entries)?);
        eval::speedup_jsonl(&entries)?
            .lines()
            .map(|l| serde_json::from_str(l).expect("own output parses"))
            .collect()
    };
    match latest_eval
        .as_ref()
        .and_then(|v| v["aggregate_cer"].as_f64())
    {
        Some(cer) => human.push_str(&format!(
            "latest evaluation: CER {} over {} reference graphemes\n",
            percent(cer),
            latest_eval
                .as_ref()
                .map_or(Value::Null, |v| v["total_ref_len"].clone())
        )),
        None => human.push_str("latest evaluation: no data\n"),
    }
    ctx.emit(
        &human,
        json!({ "speedup": speedup_json, "latest_eval": latest_eval }),
    );
    Ok(())
}
