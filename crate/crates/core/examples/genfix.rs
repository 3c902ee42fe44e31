fn main() {
    let cfg = refrec::synth::SynthConfig {
        n_users: 60,
        n_items: 40,
        rank: 3,
        density: 0.25,
        noise: 0.3,
        popularity_skew: 0.8,
        preference_sharpness: 3.0,
        seed: 11,
    };
    let recs = refrec::synth::generate(&cfg);
    refrec::synth::write_ml_dat(std::path::Path::new("/tmp/fixture.dat"), &recs).unwrap();
    println!("{} records", recs.len());
}
