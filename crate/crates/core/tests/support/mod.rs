pub mod truth_table;
