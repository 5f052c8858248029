use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::RoundRecord;

pub const ROUNDS_HEADER: &str =
    "config_hash,strategy,n_clients,round,selected_client,train_acc,test_acc,mia_acc,member_conf,nonmember_conf";

/// Write `contents` to a sibling temp file, then rename over `path`.
/// Parent directories are created as needed.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn push_round_row(out: &mut String, config_hash: &str, n_clients: usize, r: &RoundRecord) {
    let _ = writeln!(
        out,
        "{config_hash},{},{n_clients},{},{},{},{},{},{},{}",
        r.strategy,
        r.round,
        r.selected_client.map(|c| c.to_string()).unwrap_or_default(),
        r.train_accuracy,
        r.test_accuracy,
        opt(r.mia_accuracy),
        opt(r.mean_member_confidence),
        opt(r.mean_nonmember_confidence),
    );
}

/// `rounds.csv` contents for one run.
pub fn rounds_csv(config_hash: &str, n_clients: usize, records: &[RoundRecord]) -> String {
    let mut out = String::new();
    out.push_str(ROUNDS_HEADER);
    out.push('\n');
    for r in records {
        push_round_row(&mut out, config_hash, n_clients, r);
    }
    out
}

pub(crate) fn to_json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
