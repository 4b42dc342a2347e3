use std::path::Path;

use anyhow::{Context, Result};
use isoscale::records::to_jsonl;
use isoscale::synth::{analytic_optima, generate, SynthSpec};
use serde_json::json;

use crate::output::{read_input, Run};
use crate::{Status, SynthArgs};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TRUTH_FILE: &str = "truth.json";

pub fn run(out_dir: &Path, args: &SynthArgs) -> Result<Status> {
    let (spec, input) = match &args.spec {
        Some(path) => {
            let bytes = read_input(path)?;
            let spec: SynthSpec =
                serde_json::from_slice(&bytes).with_context(|| format!("invalid synth spec {}", path.display()))?;
            (spec, Some((path.as_path(), bytes)))
        }
        None => (SynthSpec::default(), None),
    };
    spec.validate()?;
    let inputs: Vec<(&Path, &[u8])> = input.iter().map(|(p, b)| (*p, b.as_slice())).collect();
    let mut run = Run::new(out_dir, "synth", serde_json::to_value(&spec)?, &inputs);

    let mut records = generate(&spec)?;
    for r in &mut records {
        r.meta.insert("manifest_digest".into(), run.digest().to_string());
    }
    let truth = analytic_optima(&spec)?;
    run.write(RECORDS_FILE, to_jsonl(&records).as_bytes())?;
    run.write_json(TRUTH_FILE, &json!({ "manifest_digest": run.digest(), "spec": spec, "truth": truth }))?;
    let manifest = run.finish()?;
    println!("wrote {} records to {}", records.len(), out_dir.join(RECORDS_FILE).display());
    println!("manifest {}", manifest.display());
    Ok(Status::Success)
}
