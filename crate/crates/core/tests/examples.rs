// SPDX-License-Identifier: Apache-2.0

//! Every example is compiled into this test and run.

mod ring_oscillator {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/ring_oscillator.rs"));
}

#[test]
fn ring_oscillator_runs() {
    ring_oscillator::run().expect("ring_oscillator example");
}

mod integrate_and_fire {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/integrate_and_fire.rs"));
}

#[test]
fn integrate_and_fire_runs() {
    integrate_and_fire::run().expect("integrate_and_fire example");
}

mod generate_reservoir {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/generate_reservoir.rs"));
}

#[test]
fn generate_reservoir_runs() {
    generate_reservoir::run().expect("generate_reservoir example");
}

mod emit_verilog {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/emit_verilog.rs"));
}

#[test]
fn emit_verilog_runs() {
    emit_verilog::run().expect("emit_verilog example");
}

mod observe_window {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/observe_window.rs"));
}

#[test]
fn observe_window_runs() {
    observe_window::run().expect("observe_window example");
}

mod udp_loopback {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/udp_loopback.rs"));
}

#[test]
fn udp_loopback_runs() {
    udp_loopback::run().expect("udp_loopback example");
}

mod shd_preprocess {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/shd_preprocess.rs"));
}

#[test]
fn shd_preprocess_runs() {
    shd_preprocess::run().expect("shd_preprocess example");
}

mod softmax_readout {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/softmax_readout.rs"));
}

#[test]
fn softmax_readout_runs() {
    softmax_readout::run().expect("softmax_readout example");
}

mod scaling_sweep {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scaling_sweep.rs"));
}

#[test]
fn scaling_sweep_runs() {
    scaling_sweep::run().expect("scaling_sweep example");
}

mod pipeline {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pipeline.rs"));
}

#[test]
fn pipeline_runs() {
    pipeline::run().expect("pipeline example");
}
