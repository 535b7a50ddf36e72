// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(context_crawl::pipeline::cli::run(std::env::args_os()));
}
