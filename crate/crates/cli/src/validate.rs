use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use toolrec_core::dataset::check_dataset;
use toolrec_core::DatasetStyle;

use crate::{load_corpus, write_err, CliError, StyleArg};

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    /// Dataset to check against the catalog; omit to check the catalog alone.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rectools")]
    pub style: StyleArg,
}

/// Prints one line per violation and a final count. Any violation is an
/// input failure.
pub fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load_corpus(&args.catalog)?;
    let Some(path) = &args.dataset else {
        writeln!(out, "{}: {} tools", args.catalog.display(), corpus.len()).map_err(write_err)?;
        writeln!(out, "0 violations").map_err(write_err)?;
        return Ok(());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let style = DatasetStyle::from(args.style);
    let (records, violations) = check_dataset(&text, &corpus, style.bound());
    for v in &violations {
        writeln!(out, "{}:{}: {}", path.display(), v.line, v.message).map_err(write_err)?;
    }
    writeln!(
        out,
        "{}: {} tools, {} valid records ({} style, {} tools per query)",
        path.display(),
        corpus.len(),
        records.len(),
        style.name(),
        style.bound()
    )
    .map_err(write_err)?;
    writeln!(out, "{} violations", violations.len()).map_err(write_err)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "{}: {} violations",
            path.display(),
            violations.len()
        )))
    }
}
