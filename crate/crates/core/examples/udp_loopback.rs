// SPDX-License-Identifier: Apache-2.0

// Streams a window to a local simulation server and checks the answer
// against an in-process run.

use std::sync::Arc;

use bsnn::elaborator::elaborate;
use bsnn::harness::window_runner;
use bsnn::netgen::{generate, ConnectivityParams, GridDims};
use bsnn::neuroblocks::BlockConfig;
use bsnn::shd::{preprocess, synthetic_samples};
use bsnn::spikeio::{Client, ClientConfig, Server, ServerConfig};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let spec = generate(GridDims::new(7, 7, 2), &ConnectivityParams::default(), Some(2), 49)?;
    let net = Arc::new(elaborate(&spec, &BlockConfig::lumped())?);
    let runner = window_runner(net, 0.0, 0);
    let server = Server::bind("127.0.0.1:0", Arc::clone(&runner), ServerConfig::default())?;
    let mut client = Client::connect(server.local_addr(), ClientConfig::default())?;

    for (session, s) in synthetic_samples(3, 1, 5).iter().enumerate() {
        let input = preprocess(s).to_input();
        let remote = client.run_window(session as u32, &input)?;
        assert_eq!(remote, runner(session as u32, &input)?);
        println!("session {session}: {} spikes", remote.total());
    }
    println!("client {:?}", client.stats());
    println!("server {:?}", server.stats());
    server.shutdown();
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run()
}
