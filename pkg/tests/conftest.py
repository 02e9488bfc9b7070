import hypothesis

hypothesis.settings.register_profile(
    "ci",
    max_examples=50,
    deadline=None,
    derandomize=True,
    print_blob=False,
)
hypothesis.settings.load_profile("ci")
