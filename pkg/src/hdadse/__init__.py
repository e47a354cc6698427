"""Design-space exploration for heterogeneous-dataflow DNN accelerators."""
