//! Scan files, synthetic workloads, map dumps and dataset conversion.

pub mod dump;
pub mod graph;
pub mod scan;
pub mod synthetic;

pub use dump::{dump_map, load_map, read_map, save_map};
pub use graph::{convert_graph, encode_graph, graph_to_scans, parse_graph, GraphNode};
pub use scan::{emit_scans, parse_scans, parse_scans_str, write_scans, Scan, ScanFile};
pub use synthetic::{generate_room, Room, RoomSpec};
