//! Binds the two stage modules into one runnable pipeline module.
//!
//! Stage sources are embedded between `# @@stage <name> begin/end` comments
//! so a traceback line in the assembled file maps back to its stage. Merged
//! header imports carry a `# @@from <stages>` tag for the same reason.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{GeneratedModule, InterfaceContract, Stage, SubmissionFormat};
use crate::source;
use crate::verify::{MARKER, SUBMISSION_FILE};

pub const ASSEMBLED_ENTRYPOINT: &str = "run_pipeline";
/// Exit code of the handoff check when preprocessing left an artifact out.
pub const HANDOFF_EXIT: i32 = 4;
pub const HANDOFF_MISSING: &str = "HANDOFF_MISSING";

const RESERVED: &[&str] = &["run_pipeline", "PIPELINE_ARTIFACTS", "SUBMISSION_COLUMNS"];
const RESERVED_PREFIX: &str = "_pw_";

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn begin_marker(stage: Stage) -> String {
    format!("# @@stage {stage} begin")
}

fn end_marker(stage: Stage) -> String {
    format!("# @@stage {stage} end")
}

/// Top-level names defined by both stages or shadowing assembler names.
pub fn symbol_conflicts(prep: &GeneratedModule, model: &GeneratedModule) -> Vec<String> {
    let a = source::top_level_symbols(&prep.source_text);
    let b = source::top_level_symbols(&model.source_text);
    let reserved = |n: &String| RESERVED.contains(&n.as_str()) || n.starts_with(RESERVED_PREFIX);
    let mut out: BTreeSet<String> = a.intersection(&b).cloned().collect();
    out.extend(a.iter().chain(b.iter()).filter(|n| reserved(n)).cloned());
    out.into_iter().collect()
}

fn split_future(src: &str) -> (Vec<String>, String) {
    let mut futures = Vec::new();
    let mut body = String::with_capacity(src.len());
    for line in src.lines() {
        if line.starts_with("from __future__ import") {
            futures.push(line.trim_end().to_string());
            body.push_str("# hoisted: ");
            body.push_str(line.trim_end());
        } else {
            body.push_str(line);
        }
        body.push('\n');
    }
    (futures, body)
}

/// Builds the assembled module. Fails with `ASSEMBLY_CONFLICT` when the
/// stages bind the same top-level name.
pub fn assemble(
    prep: &GeneratedModule,
    model: &GeneratedModule,
    contract: &InterfaceContract,
    submission: Option<&SubmissionFormat>,
    revision: u32,
) -> Result<GeneratedModule> {
    let symbols = symbol_conflicts(prep, model);
    if !symbols.is_empty() {
        return Err(Error::AssemblyConflict { symbols });
    }
    let (f1, prep_body) = split_future(&prep.source_text);
    let (f2, model_body) = split_future(&model.source_text);

    let mut imports: Vec<(String, Vec<Stage>)> = Vec::new();
    for (stage, src) in [(Stage::Preprocessing, &prep.source_text), (Stage::Modeling, &model.source_text)] {
        for stmt in source::import_statements(src) {
            match imports.iter_mut().find(|(s, _)| *s == stmt) {
                Some((_, stages)) => {
                    if !stages.contains(&stage) {
                        stages.push(stage);
                    }
                }
                None => imports.push((stmt, vec![stage])),
            }
        }
    }

    let mut s = String::new();
    let futures: BTreeSet<String> = f1.into_iter().chain(f2).collect();
    for f in &futures {
        s.push_str(f);
        s.push('\n');
    }
    s.push_str(&format!(
        "# Assembled pipeline: preprocessing rev {}, modeling rev {}.\n",
        prep.revision, model.revision
    ));
    s.push_str("import argparse as _pw_argparse\nimport csv as _pw_csv\nimport os as _pw_os\nimport sys as _pw_sys\n");
    for (stmt, stages) in &imports {
        let tags: Vec<&str> = stages.iter().map(|s| s.as_str()).collect();
        s.push_str(&format!("{stmt}  # @@from {}\n", tags.join(",")));
    }
    s.push('\n');

    s.push_str("PIPELINE_ARTIFACTS = {\n");
    for a in &contract.artifacts {
        s.push_str(&format!(
            "    {}: {{\"file\": {}, \"producer\": {}}},\n",
            py_str(&a.name),
            py_str(&a.file_name()),
            py_str(a.producer.as_str())
        ));
    }
    s.push_str("}\n");
    match submission {
        Some(f) => {
            let cols: Vec<String> = f.columns().iter().map(|c| py_str(c)).collect();
            s.push_str(&format!("SUBMISSION_COLUMNS = [{}]\n", cols.join(", ")));
        }
        None => s.push_str("SUBMISSION_COLUMNS = None\n"),
    }
    s.push('\n');

    for (stage, body) in [(Stage::Preprocessing, &prep_body), (Stage::Modeling, &model_body)] {
        s.push_str(&begin_marker(stage));
        s.push('\n');
        s.push_str(body);
        if !body.ends_with('\n') {
            s.push('\n');
        }
        s.push_str(&end_marker(stage));
        s.push_str("\n\n");
    }

    let predictions = contract
        .produced_by(Stage::Modeling)
        .find(|a| a.name == "predictions")
        .map(|a| a.file_name())
        .unwrap_or_else(|| "predictions.csv".into());
    s.push_str(&format!(
        r#"
def _pw_handoff(artifacts_dir):
    for name, spec in PIPELINE_ARTIFACTS.items():
        if spec["producer"] != "preprocessing":
            continue
        if not _pw_os.path.exists(_pw_os.path.join(artifacts_dir, spec["file"])):
            _pw_sys.stderr.write("{HANDOFF_MISSING}: " + name + "\n")
            _pw_sys.exit({HANDOFF_EXIT})


def _pw_write_submission(artifacts_dir):
    src = _pw_os.path.join(artifacts_dir, {pred})
    with open(src, newline="") as fh:
        rows = list(_pw_csv.DictReader(fh))
    with open(src, newline="") as fh:
        header = next(_pw_csv.reader(fh), [])
    columns = SUBMISSION_COLUMNS or header
    with open(_pw_os.path.join(artifacts_dir, {sub}), "w", newline="") as fh:
        w = _pw_csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r.get(c, "") for c in columns])


def run_pipeline(data_dir, artifacts_dir, sample_limit=None, seed=0):
    _pw_os.makedirs(artifacts_dir, exist_ok=True)
    print("{MARKER}:start:preprocessing", flush=True)
    {prep_call}
    _pw_handoff(artifacts_dir)
    print("{MARKER}:end:preprocessing", flush=True)
    print("{MARKER}:start:modeling", flush=True)
    {model_call}
    print("{MARKER}:end:modeling", flush=True)
    _pw_write_submission(artifacts_dir)


if __name__ == "__main__":
    _pw_p = _pw_argparse.ArgumentParser()
    _pw_p.add_argument("--data", required=True)
    _pw_p.add_argument("--artifacts", required=True)
    _pw_p.add_argument("--sample", type=int, default=0)
    _pw_p.add_argument("--seed", type=int, default=0)
    _pw_a = _pw_p.parse_args()
    run_pipeline(_pw_a.data, _pw_a.artifacts, _pw_a.sample or None, _pw_a.seed)
"#,
        pred = py_str(&predictions),
        sub = py_str(SUBMISSION_FILE),
        prep_call = call_site(&prep.entrypoint, &contract.preprocessing_entrypoint.params),
        model_call = call_site(&model.entrypoint, &contract.modeling_entrypoint.params),
    ));
    Ok(GeneratedModule::new(Stage::Assembled, s, ASSEMBLED_ENTRYPOINT, revision))
}

fn call_site(name: &str, params: &[String]) -> String {
    let args: Vec<String> = params.iter().map(|p| format!("{p}={p}")).collect();
    format!("{name}({})", args.join(", "))
}

/// 1-based inclusive line ranges of each embedded stage.
pub fn stage_spans(src: &str) -> BTreeMap<Stage, (u32, u32)> {
    let mut out = BTreeMap::new();
    let mut open: Option<(Stage, u32)> = None;
    for (i, line) in src.lines().enumerate() {
        let n = i as u32 + 1;
        let Some(rest) = line.strip_prefix("# @@stage ") else { continue };
        let mut parts = rest.split_whitespace();
        let (Some(name), Some(edge)) = (parts.next(), parts.next()) else { continue };
        let Ok(stage) = name.parse::<Stage>() else { continue };
        match (edge, open) {
            ("begin", _) => open = Some((stage, n + 1)),
            ("end", Some((s, start))) if s == stage => {
                out.insert(stage, (start, n.saturating_sub(1)));
                open = None;
            }
            _ => {}
        }
    }
    out
}

/// Stage owning line `line` (1-based) of an assembled module: the embedded
/// span it falls in, or the first stage a tagged header import came from.
pub fn localize_line(src: &str, line: u32) -> Option<Stage> {
    if let Some((&stage, _)) = stage_spans(src)
        .iter()
        .find(|(_, (a, b))| (*a..=*b).contains(&line))
    {
        return Some(stage);
    }
    let text = src.lines().nth(line.checked_sub(1)? as usize)?;
    let (_, tags) = text.rsplit_once("# @@from ")?;
    tags.split(',').next()?.trim().parse().ok()
}
