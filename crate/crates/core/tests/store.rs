mod common;

use std::fs;
use std::io::BufReader;

use common::{build, fixture, synthetic_corpus};
use qedb::graph::{load_store, read_export, save_store, write_export, StoreError};

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn load_of_save_is_identity() {
    let tmp = tempfile::tempdir().unwrap();
    for name in common::FIXTURES {
        let graph = build(&fixture(name));
        let path = tmp.path().join(name);
        save_store(&graph, &path).unwrap();
        assert_eq!(load_store(&path).unwrap(), graph, "{name}");
    }
}

#[test]
fn independent_builds_write_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, corpus) in [fixture("multidoc"), synthetic_corpus(9, 150)].iter().enumerate() {
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        save_store(&build(corpus), &a).unwrap();
        save_store(&build(corpus), &b).unwrap();
        assert_eq!(read_all(&a), read_all(&b));
    }
}

#[test]
fn export_rebuilds_an_equal_graph() {
    for graph in common::FIXTURES
        .iter()
        .map(|n| build(&fixture(n)))
        .chain((0..3).map(|s| build(&synthetic_corpus(s, 80))))
    {
        let mut buf = Vec::new();
        write_export(&graph, &mut buf).unwrap();
        let rebuilt = read_export(BufReader::new(&buf[..])).unwrap();
        assert_eq!(rebuilt, graph);
    }
}

#[test]
fn tampered_file_fails_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("store");
    save_store(&build(&fixture("fingersmith")), &path).unwrap();
    let edges = path.join("edges.jsonl");
    let text = fs::read_to_string(&edges).unwrap().replace("based on", "based at");
    fs::write(&edges, text).unwrap();
    assert!(matches!(load_store(&path), Err(StoreError::Checksum { .. })));
}

#[test]
fn newer_version_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("store");
    save_store(&build(&fixture("fingersmith")), &path).unwrap();
    let header = path.join("header.json");
    let text = fs::read_to_string(&header).unwrap().replace("\"version\": 1", "\"version\": 2");
    fs::write(&header, text).unwrap();
    assert!(matches!(
        load_store(&path),
        Err(StoreError::NewerVersion { found: 2, supported: 1 })
    ));
}

#[test]
fn missing_or_foreign_directories_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(load_store(&tmp.path().join("absent")).is_err());
    fs::write(tmp.path().join("notes.txt"), "hello").unwrap();
    assert!(matches!(load_store(tmp.path()), Err(StoreError::NotAStore { .. })));
    let graph = build(&fixture("fingersmith"));
    assert!(matches!(save_store(&graph, tmp.path()), Err(StoreError::Occupied { .. })));
    assert!(tmp.path().join("notes.txt").exists());
}

#[test]
fn saving_over_a_store_replaces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("store");
    save_store(&build(&fixture("fingersmith")), &path).unwrap();
    let multidoc = build(&fixture("multidoc"));
    save_store(&multidoc, &path).unwrap();
    assert_eq!(load_store(&path).unwrap(), multidoc);
}
