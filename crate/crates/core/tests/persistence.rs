mod common;

use common::persist::*;

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    checkpoint_round_trip(dir.path()).unwrap();
}

#[test]
fn corrupt_checkpoints_get_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    corrupt_files_rejected(dir.path()).unwrap();
}

#[test]
fn pipeline_outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    outputs_byte_stable(dir.path()).unwrap();
}
