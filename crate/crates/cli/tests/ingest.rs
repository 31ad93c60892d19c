//! CSV ingestion and export.

mod common;

use std::fs;

use ivqr_cli::config::RoleNames;
use ivqr_cli::io::{load_csv, role_names, write_csv};
use ivqr_cli::CliError;
use ivqr_core::dgp::{DemandDgp, LocationScaleDgp};

fn roles(y: &str, d: &str, z: &str) -> RoleNames {
    RoleNames {
        y: y.into(),
        d: vec![d.into()],
        x: vec![],
        z: vec![z.into()],
    }
}

#[test]
fn three_rows_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.csv");
    fs::write(&path, "y,d,z\n1.5,0,1\n-2,1,0\n3e-1,1,1\n").unwrap();
    let loaded = load_csv(&path, &roles("y", "d", "z")).unwrap();
    assert_eq!(loaded.dataset.n(), 3);
    assert_eq!(loaded.dataset.y(), &[1.5, -2.0, 0.3]);
    assert_eq!(loaded.dropped_rows, 0);
}

#[test]
fn bad_cell_is_reported_with_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "y,d,z\n1.0,abc,1\n2.0,1,0\n").unwrap();
    let err = load_csv(&path, &roles("y", "d", "z")).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Data(_)));
    assert!(msg.contains("row 2") && msg.contains("column \"d\""), "{msg}");

    // a decimal comma is not a number
    fs::write(&path, "y,d,z\n\"1,5\",0,1\n").unwrap();
    assert!(matches!(load_csv(&path, &roles("y", "d", "z")), Err(CliError::Data(_))));
}

#[test]
fn missing_values_are_dropped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gaps.csv");
    fs::write(&path, "y,d,z,note\n1,0,1,a\n,1,0,b\n2,NA,1,\n3,1,0,\n").unwrap();
    let loaded = load_csv(&path, &roles("y", "d", "z")).unwrap();
    assert_eq!((loaded.rows_read, loaded.dropped_rows, loaded.dataset.n()), (4, 2, 2));
    // the unused `note` column may be empty without dropping rows
    assert_eq!(loaded.dataset.y(), &[1.0, 3.0]);
}

#[test]
fn empty_and_missing_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "y,d,z\n,,\n").unwrap();
    let err = load_csv(&path, &roles("y", "d", "z")).unwrap_err();
    assert!(matches!(err, CliError::Data(_)) && err.to_string().contains("no usable rows"));

    assert!(matches!(load_csv(&dir.path().join("absent.csv"), &roles("y", "d", "z")), Err(CliError::Data(_))));

    fs::write(&path, "y,d,z\n1,2,3\n").unwrap();
    let err = load_csv(&path, &roles("y", "price", "z")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)) && err.to_string().contains("\"price\""));
}

#[test]
fn simulated_data_round_trips_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    for sim in [
        DemandDgp::calibrated().simulate(500, 9).unwrap(),
        LocationScaleDgp {
            covariate: Some(0.3),
            ..Default::default()
        }
        .simulate(500, 9)
        .unwrap(),
    ] {
        let path = dir.path().join("sim.csv");
        write_csv(&path, &sim.data).unwrap();
        let roles = role_names(&sim.data);
        let back = load_csv(&path, &roles).unwrap().dataset;
        for name in roles.all() {
            let a = sim.data.column(sim.data.column_index(name).unwrap());
            let b = back.column(back.column_index(name).unwrap());
            assert!(a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()), "column {name}");
        }
    }
}
