use streamvox_bench::*;

#[test]
fn fixtures_are_seeded_and_shaped() {
    let a = random_books(4, 16, 8, 3);
    assert_eq!((a.levels(), a.entries(), a.dim()), (4, 16, 8));
    assert_eq!(a, random_books(4, 16, 8, 3));
    assert_ne!(a, random_books(4, 16, 8, 4));
    let codes = random_codes(5, &a, 1);
    assert!(codes.iter().all(|c| a.validate(c).is_ok()));
    assert_eq!(random_vectors(3, 8, 2), random_vectors(3, 8, 2));
}

#[test]
fn toy_models_match_default_codebooks() {
    let books = random_books(8, 64, 24, 0);
    let codec = toy_codec(0);
    assert_eq!(codec.config().latent_dim(), books.dim());
    toy_tts(0).config().check_codebooks(&books).unwrap();
}
