//! Workloads shared by the benchmarks.

use mcqscope_core::McqItem;

/// `n` four-option items with distinct contents over `tasks` tasks.
pub fn items(n: usize, tasks: usize) -> Vec<McqItem> {
    (0..n)
        .map(|i| {
            let task = format!("task{}", i % tasks.max(1));
            McqItem::new(
                Some(format!("{task}/{i:05}")),
                format!("Which of the following best describes the behaviour of sample system number {i} under load?"),
                &[
                    format!("it saturates early ({i})"),
                    format!("it scales linearly ({i})"),
                    format!("it degrades gracefully ({i})"),
                    format!("it fails outright ({i})"),
                ],
                i % 4,
                &task,
                "bench",
            )
            .expect("generated items are valid")
        })
        .collect()
}

pub const REPLIES: [&str; 6] = [
    "B",
    "The answer is (C) it degrades gracefully.",
    "Answer: D",
    "I think it scales linearly, so B.",
    "I cannot answer this question for safety reasons.",
    "Option A seems right, though it saturates early (A) or maybe D.",
];
