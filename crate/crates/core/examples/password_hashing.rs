//! Hash a password with bcrypt and show what a stored hash looks like.

use passgate::password::{check_policy, hash_password, verify_encoded, verify_password};

fn main() {
    let cost = 10;
    let h = hash_password("correct horse battery staple", cost).unwrap();
    println!("stored:   {}", h.as_str());
    println!("cost:     {}", h.cost());
    println!(
        "right pw: {}",
        verify_password("correct horse battery staple", &h)
    );
    println!(
        "wrong pw: {}",
        verify_password("correct horse battery stapler", &h)
    );

    let again = hash_password("correct horse battery staple", cost).unwrap();
    println!("same password, new salt: {}", again.as_str());

    let mut tampered = h.as_str().to_owned();
    tampered.replace_range(3..4, "x");
    println!(
        "tampered: {:?}",
        verify_encoded("correct horse battery staple", &tampered)
    );
    println!("policy on \"short\": {:?}", check_policy("short"));
}
