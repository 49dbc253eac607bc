fn main() {
    println!("momentopf CLI: under construction");
}
