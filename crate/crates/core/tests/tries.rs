use std::collections::BTreeMap;

use proptest::prelude::*;
use serde::Deserialize;
use zkpath_core::merkle::{build_tree, fold, native_proof_size, AuthStep, MerklePath, PaddingPolicy, ProofLayout};
use zkpath_core::mpt::{empty_root, mpt_verify_proof, Mpt};
use zkpath_core::{hex, keccak256, Digest};

#[derive(Deserialize)]
struct Golden {
    cases: Vec<GoldenCase>,
}

#[derive(Deserialize)]
struct GoldenCase {
    pairs: Vec<(String, String)>,
    root: Digest,
    probe_key: String,
    probe_nodes: Vec<String>,
}

fn golden() -> Golden {
    serde_json::from_str(include_str!("data/mpt_golden.json")).unwrap()
}

#[test]
fn empty_trie_root() {
    assert_eq!(empty_root(), keccak256([0x80]));
    assert_eq!(
        empty_root().to_hex(),
        "0x56e81f171bcc55a6ff8345e692c0f86e5b48e01b996cadc001622fb5e363b421"
    );
    assert_eq!(Mpt::build::<Vec<u8>, Vec<u8>>(&[]).unwrap().root(), empty_root());
}

#[test]
fn matches_reference_implementation() {
    let g = golden();
    assert_eq!(g.cases.len(), 24);
    for (i, c) in g.cases.iter().enumerate() {
        let pairs: Vec<(Vec<u8>, Vec<u8>)> = c
            .pairs
            .iter()
            .map(|(k, v)| (hex::decode(k).unwrap(), hex::decode(v).unwrap()))
            .collect();
        let trie = Mpt::build(&pairs).unwrap();
        assert_eq!(trie.root(), c.root, "case {i} root");

        let proof = trie.get_proof(&hex::decode(&c.probe_key).unwrap()).unwrap();
        proof.verify().unwrap();
        let ours: Vec<String> = proof.nodes.iter().map(hex::encode).collect();
        assert_eq!(ours, c.probe_nodes, "case {i} proof nodes");
    }
}

fn arb_map() -> impl Strategy<Value = BTreeMap<Vec<u8>, Vec<u8>>> {
    let key = prop_oneof![
        prop::collection::vec(any::<u8>(), 1..5),
        prop::collection::vec(any::<u8>(), 32..=32),
    ];
    prop::collection::btree_map(key, prop::collection::vec(any::<u8>(), 1..70), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mpt_proofs_complete(map in arb_map()) {
        let pairs: Vec<_> = map.iter().collect();
        let trie = Mpt::build(&pairs).unwrap();
        // insertion order does not matter
        let mut rev = pairs.clone();
        rev.reverse();
        prop_assert_eq!(Mpt::build(&rev).unwrap().root(), trie.root());
        for (k, v) in &map {
            prop_assert_eq!(trie.get(k), Some(v.as_slice()));
            let p = trie.get_proof(k).unwrap();
            prop_assert!(p.path_len() >= 1);
            prop_assert!(mpt_verify_proof(&p).is_ok());
            let path = MerklePath::from_mpt_proof(&p);
            prop_assert!(path.verify());
            prop_assert_eq!(path.native_size(), p.native_size());
        }
    }

    #[test]
    fn mpt_proofs_sound(map in arb_map(), pick in any::<prop::sample::Index>(), byte in any::<prop::sample::Index>(), bit in 0u8..8) {
        let pairs: Vec<_> = map.iter().collect();
        let trie = Mpt::build(&pairs).unwrap();
        let (k, _) = pairs[pick.index(pairs.len())];
        let proof = trie.get_proof(k).unwrap();

        let mut bad_value = proof.clone();
        let i = byte.index(bad_value.value.len());
        bad_value.value[i] ^= 1 << bit;
        prop_assert!(bad_value.verify().is_err());

        let mut bad_root = proof.clone();
        bad_root.root.0[byte.index(32)] ^= 1 << bit;
        prop_assert!(bad_root.verify().is_err());

        for n in 0..proof.nodes.len() {
            let mut bad = proof.clone();
            let i = byte.index(bad.nodes[n].len());
            bad.nodes[n][i] ^= 1 << bit;
            prop_assert!(bad.verify().is_err(), "node {} byte {} survived", n, i);
        }

        let mut truncated = proof.clone();
        truncated.nodes.pop();
        prop_assert!(truncated.verify().is_err());
    }

    #[test]
    fn merkle_paths_complete(n in 1usize..300, seed in any::<u64>()) {
        let leaves: Vec<Vec<u8>> = (0..n).map(|i| format!("{seed}/{i}").into_bytes()).collect();
        let tree = build_tree(&leaves, PaddingPolicy::DuplicateLast).unwrap();
        prop_assert!(tree.is_consistent());
        let height = (n as f64).log2().ceil() as usize;
        prop_assert_eq!(tree.height(), height);
        for i in [0, n / 2, n - 1] {
            let path = tree.gen_path(i).unwrap();
            prop_assert_eq!(path.len(), height);
            prop_assert_eq!(path.native_size(), native_proof_size(height, ProofLayout::Binary));
            prop_assert_eq!(path.leaf_hash, keccak256(&leaves[i]));
            prop_assert_eq!(fold(&path.leaf_hash, &path.steps).unwrap(), tree.root());
        }
        prop_assert!(tree.gen_path(n).is_err());
    }

    #[test]
    fn merkle_paths_sound(n in 2usize..200, idx in any::<prop::sample::Index>(), step in any::<prop::sample::Index>(), bit in 0u8..8) {
        let leaves: Vec<Vec<u8>> = (0..n).map(|i| vec![i as u8, (i >> 8) as u8]).collect();
        let tree = build_tree(&leaves, PaddingPolicy::DuplicateLast).unwrap();
        let path = tree.gen_path(idx.index(n)).unwrap();
        let s = step.index(path.len());

        let mut bad = path.clone();
        if let AuthStep::Sibling { sibling, .. } = &mut bad.steps[s] {
            sibling.0[(bit as usize * 3) % 32] ^= 1 << bit;
        }
        prop_assert!(!bad.verify());

        let mut bad_leaf = path.clone();
        bad_leaf.leaf_hash.0[0] ^= 1 << bit;
        prop_assert!(!bad_leaf.verify());

        // a flipped side only matters when the two children differ
        let acc = fold(&path.leaf_hash, &path.steps[..s]).unwrap();
        if let AuthStep::Sibling { sibling, side } = path.steps[s] {
            let mut flipped = path.clone();
            flipped.steps[s] = AuthStep::Sibling { sibling, side: side.flip() };
            prop_assert_eq!(flipped.verify(), sibling == acc);
        }
    }
}

#[test]
fn strict_padding_rejects_odd_levels() {
    assert!(build_tree(&[b"a", b"b", b"c"], PaddingPolicy::RejectNonPowerOfTwo).is_err());
    assert!(build_tree(&[b"a", b"b", b"c", b"d"], PaddingPolicy::RejectNonPowerOfTwo).is_ok());
    assert!(build_tree::<&[u8]>(&[], PaddingPolicy::DuplicateLast).is_err());
}
