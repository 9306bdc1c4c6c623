// Training allocates and frees tens of megabytes per layer per step; the
// system allocator hands those back to the OS and page-faults them in again.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(wsed::cli::dispatch(std::env::args_os()));
}
