//! OAuth2 authorization-code login against the built-in mock provider.

mod support;

use url::Url;

fn main() {
    let demo = support::setup();
    let start = demo.flows.oauth_start();
    println!("redirect to {}", start.authorize_url);

    // the provider approves and redirects back with ?code=..&state=..
    let callback = Url::parse(&demo.oauth.authorize(&start.state, "linus@example.com")).unwrap();
    println!("callback {callback}");
    let param = |name: &str| {
        callback
            .query_pairs()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.into_owned())
            .unwrap()
    };
    let (code, state) = (param("code"), param("state"));

    let token = demo.flows.oauth_callback(&code, &state).unwrap();
    let claims = demo.flows.authenticate(token.as_str()).unwrap();
    println!("signed in as {} ({})", claims.email, claims.subject);

    let fresh = demo.flows.oauth_start();
    println!(
        "replayed code: {:?}",
        demo.flows.oauth_callback(&code, &fresh.state).err()
    );
    println!(
        "replayed state: {:?}",
        demo.flows.oauth_callback(&code, &state).err()
    );
}
