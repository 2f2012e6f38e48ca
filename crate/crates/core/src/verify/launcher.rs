//! The stage launcher run inside the sandbox.
//!
//! It speaks the `run-stage --module M --contract C --artifacts D --sample N`
//! command line, so an external runner with the same surface can replace it.
//! Data directory, stage and seed come from `--data/--stage/--seed` or the
//! `PIPEWRIGHT_*` environment variables.

pub const MARKER: &str = "@@pipewright";
pub const MISSING_ENTRYPOINT: &str = "MISSING_ENTRYPOINT";
pub const MISSING_ENTRYPOINT_EXIT: i32 = 3;

pub const LAUNCHER_PY: &str = r#"import argparse
import importlib.util
import json
import os
import sys


def main(argv=None):
    parser = argparse.ArgumentParser(prog="runner-shim")
    sub = parser.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run-stage")
    run.add_argument("--module", required=True)
    run.add_argument("--contract", required=True)
    run.add_argument("--artifacts", required=True)
    run.add_argument("--sample", type=int, default=0)
    run.add_argument("--data", default=os.environ.get("PIPEWRIGHT_DATA_DIR"))
    run.add_argument("--stage", default=os.environ.get("PIPEWRIGHT_STAGE"))
    run.add_argument("--seed", type=int, default=int(os.environ.get("PIPEWRIGHT_SEED", "0")))
    args = parser.parse_args(argv)

    with open(args.contract) as fh:
        contract = json.load(fh)
    entry = contract[args.stage + "_entrypoint"]
    os.makedirs(args.artifacts, exist_ok=True)

    print("@@pipewright:start:" + args.stage, flush=True)
    spec = importlib.util.spec_from_file_location("stage_module", args.module)
    module = importlib.util.module_from_spec(spec)
    sys.modules["stage_module"] = module
    spec.loader.exec_module(module)
    fn = getattr(module, entry["name"], None)
    if not callable(fn):
        sys.stderr.write("MISSING_ENTRYPOINT: " + entry["name"] + "\n")
        return 3
    values = {
        "data_dir": args.data,
        "artifacts_dir": args.artifacts,
        "sample_limit": args.sample or None,
        "seed": args.seed,
    }
    fn(**{p: values[p] for p in entry["params"] if p in values})
    print("@@pipewright:end:" + args.stage, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
"#;

/// Stage named by the last start marker in `stdout`.
pub fn last_stage_started(stdout: &str) -> Option<crate::model::Stage> {
    let prefix = format!("{MARKER}:start:");
    stdout
        .lines()
        .filter_map(|l| l.trim().strip_prefix(prefix.as_str()))
        .last()
        .and_then(|s| s.parse().ok())
}

/// True when `stage` printed its end marker.
pub fn stage_finished(stdout: &str, stage: crate::model::Stage) -> bool {
    let m = format!("{MARKER}:end:{stage}");
    stdout.lines().any(|l| l.trim() == m)
}
