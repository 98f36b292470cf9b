//! Prints the default model document; redirect into `models/default-v1.json`.

fn main() {
    let model = groupsense_core::defaults::train_default_model().expect("training succeeds");
    println!("{}", groupsense_core::save_model(&model));
}
