//! Scenario corpus: seeded random scenarios plus the scripted
//! constructions the acceptance suite and the CLI share.
//!
//! Script generation draws from its own RNG seeded with the scenario
//! seed, so a seed fully determines both the operations and the
//! schedule.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::adversary::AdversarySpec;
use crate::crypto::CryptoKind;
use crate::functionality::{Operation, Workload};
use crate::simnet::{Scenario, Script, ScriptStep};

const KV_KEYS: u64 = 8;

pub fn random_op(rng: &mut StdRng, workload: Workload) -> Operation {
    match workload {
        Workload::Counter => {
            if rng.random_bool(0.5) {
                Operation::Add(rng.random_range(1..=9))
            } else {
                Operation::Dec(rng.random_range(1..=6))
            }
        }
        Workload::Kv => {
            let key = format!("k{}", rng.random_range(0..KV_KEYS)).into_bytes();
            if rng.random_bool(0.5) {
                let value = format!("v{}", rng.random_range(0..16)).into_bytes();
                Operation::Put(key, value)
            } else {
                Operation::Get(key)
            }
        }
    }
}

fn base_scenario(clients: u64, workload: Workload, seed: u64, scripts: Vec<Script>) -> Scenario {
    Scenario {
        clients,
        workload,
        authstore: false,
        crypto: CryptoKind::Sha256,
        seed,
        gc: false,
        adversary: AdversarySpec::None,
        scripts,
        event_cap: 200_000,
    }
}

/// Deals `total` random operations round-robin across fresh scripts.
fn dealt_scripts(rng: &mut StdRng, clients: u64, total: u64, workload: Workload) -> Vec<Script> {
    let mut scripts: Vec<Script> = vec![Vec::new(); clients as usize];
    for i in 0..total {
        let idx = (i % clients) as usize;
        scripts[idx].push(ScriptStep::Op(random_op(rng, workload)));
    }
    scripts
}

/// A scenario with explicit dimensions: `total` seed-derived operations
/// dealt round-robin over `clients` clients. Callers adjust the
/// adversary, store, and crypto knobs on the result as needed.
pub fn dealt_scenario(seed: u64, clients: u64, total: u64, workload: Workload) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let scripts = dealt_scripts(&mut rng, clients, total, workload);
    base_scenario(clients, workload, seed, scripts)
}

/// A concurrent correct-server scenario: 2 to 4 clients running at most
/// ten operations in total, scheduled by the seed.
pub fn random_scenario(seed: u64, workload: Workload) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let clients = rng.random_range(2..=4);
    let total = rng.random_range(clients..=10);
    let scripts = dealt_scripts(&mut rng, clients, total, workload);
    base_scenario(clients, workload, seed, scripts)
}

/// A serialized scenario: confirmation barriers force each operation to
/// be globally confirmed before the next one is invoked, so windows stay
/// trivial and nothing can abort.
pub fn sequential_scenario(seed: u64, workload: Workload) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let clients = rng.random_range(2..=4);
    let total = rng.random_range(clients..=10);
    let mut scripts: Vec<Script> = vec![Vec::new(); clients as usize];
    for g in 1..=total {
        let idx = rng.random_range(0..clients) as usize;
        scripts[idx].push(ScriptStep::WaitAllConfirmed(g - 1));
        scripts[idx].push(ScriptStep::Op(random_op(&mut rng, workload)));
    }
    base_scenario(clients, workload, seed, scripts)
}

/// A concurrent key-value scenario against the authenticated store.
/// Alternating seeds exercise both store retention modes.
pub fn authstore_scenario(seed: u64) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let clients = rng.random_range(2..=3);
    let total = rng.random_range(clients..=8);
    let scripts = dealt_scripts(&mut rng, clients, total, Workload::Kv);
    Scenario {
        authstore: true,
        gc: seed.is_multiple_of(2),
        ..base_scenario(clients, Workload::Kv, seed, scripts)
    }
}

/// The scripted run every server adversary is pointed at: three clients,
/// three additions each, all amounts distinct so any swapped-in window
/// entry is detectably different. The seed only shuffles the schedule.
pub fn attack_scenario(adversary: AdversarySpec, seed: u64) -> Scenario {
    let scripts = (0..3u64)
        .map(|i| {
            (0..3u64)
                .map(|j| ScriptStep::Op(Operation::Add(1 + i * 3 + j)))
                .collect()
        })
        .collect();
    Scenario {
        adversary,
        event_cap: 50_000,
        ..base_scenario(3, Workload::Counter, seed, scripts)
    }
}

/// Every server adversary, under its wire name, configured for the
/// three-client attack scenario.
pub fn adversary_catalog() -> Vec<(&'static str, AdversarySpec)> {
    vec![
        (
            "fork",
            AdversarySpec::Fork {
                partitions: vec![vec![1, 3], vec![2]],
            },
        ),
        ("equivocate_reply", AdversarySpec::EquivocateReply),
        ("skip_broadcast", AdversarySpec::SkipBroadcast),
        ("reorder_broadcast", AdversarySpec::ReorderBroadcast),
        ("tamper_status", AdversarySpec::TamperStatus),
        ("forge_signature", AdversarySpec::ForgeSignature),
        ("fuzz", AdversarySpec::Fuzz),
    ]
}

/// The worked conflict example, scripted end to end: client 1 confirms
/// add(7), client 2 leaves add(2) pending forever, and client 1 then runs
/// dec(4) (succeeds, the pending add cannot starve it) and dec(6)
/// (aborts, it conflicts with the pending add at state 3). Sequence
/// numbers are pinned by the invocation barriers, so the outcome is the
/// same under every seed.
pub fn pinned_conflict(seed: u64) -> Scenario {
    base_scenario(
        2,
        Workload::Counter,
        seed,
        vec![
            vec![
                ScriptStep::Op(Operation::Add(7)),
                ScriptStep::WaitServerInvoked(2),
                ScriptStep::Op(Operation::Dec(4)),
                ScriptStep::Op(Operation::Dec(6)),
            ],
            vec![
                ScriptStep::WaitServerInvoked(1),
                ScriptStep::Op(Operation::Add(2)),
                ScriptStep::Stall,
            ],
        ],
    )
}

/// The sequence-conflict example: with 7 confirmed and ⟨dec(1), dec(3)⟩
/// pending, dec(4) aborts although each pair of those operations
/// commutes in state 7 on its own.
pub fn pinned_sequence_conflict(seed: u64) -> Scenario {
    base_scenario(
        3,
        Workload::Counter,
        seed,
        vec![
            vec![
                ScriptStep::Op(Operation::Add(7)),
                ScriptStep::WaitServerInvoked(3),
                ScriptStep::Op(Operation::Dec(4)),
            ],
            vec![
                ScriptStep::WaitServerInvoked(1),
                ScriptStep::Op(Operation::Dec(1)),
                ScriptStep::Stall,
            ],
            vec![
                ScriptStep::WaitServerInvoked(2),
                ScriptStep::Op(Operation::Dec(3)),
                ScriptStep::Stall,
            ],
        ],
    )
}

/// A two-partition fork whose merged history is provably not
/// linearizable: client 2's add(4) completes before client 1 invokes
/// dec(5), yet dec(5) answers false from a state that only client 1's
/// own add(3) reached.
pub fn fork_violation(seed: u64) -> Scenario {
    Scenario {
        adversary: AdversarySpec::Fork {
            partitions: vec![vec![1], vec![2]],
        },
        ..base_scenario(
            2,
            Workload::Counter,
            seed,
            vec![
                vec![
                    ScriptStep::Op(Operation::Add(3)),
                    ScriptStep::WaitAllConfirmed(1),
                    ScriptStep::Op(Operation::Dec(5)),
                ],
                vec![ScriptStep::Op(Operation::Add(4))],
            ],
        )
    }
}

/// A stealthy fork: two isolated clients run the same number of
/// operations, so both end on the same confirmed count and their chain
/// digests compare at a common index.
pub fn fork_divergence(seed: u64) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let scripts = (0..2)
        .map(|_| {
            (0..2)
                .map(|_| ScriptStep::Op(random_op(&mut rng, Workload::Counter)))
                .collect()
        })
        .collect();
    Scenario {
        adversary: AdversarySpec::Fork {
            partitions: vec![vec![1], vec![2]],
        },
        ..base_scenario(2, Workload::Counter, seed, scripts)
    }
}

/// The wait-freedom scenario: client 2 invokes once and freezes before
/// its reply arrives, so nothing ever broadcasts; the other clients each
/// run `adds` additions to completion regardless.
pub fn stalled_client(seed: u64, adds: u64) -> Scenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut active = |_: u64| -> Script {
        let mut script = vec![ScriptStep::WaitServerInvoked(1)];
        script.extend(
            (0..adds).map(|_| ScriptStep::Op(Operation::Add(rng.random_range(1..=9)))),
        );
        script
    };
    let scripts = vec![
        active(1),
        vec![ScriptStep::Op(Operation::Add(9)), ScriptStep::Stall],
        active(3),
    ];
    base_scenario(3, Workload::Counter, seed, scripts)
}
