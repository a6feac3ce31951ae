"""Example usage of PackDiT on a small toy dataset."""

from packdit import (
    PackDiTPipeline,
    SampleRequest,
    TaskKind,
    evaluate,
    generate_dataset,
    load_dataset,
    load_recipe,
    run_training,
)


def main():
    # Example 1: Generate data and train a small recipe
    print("=== Example 1: Train ===")
    generate_dataset(420, seed=0, out_dir="example_data")
    dataset = load_dataset("example_data")

    recipe = load_recipe("desk")
    recipe.model_preset = "micro"
    for stage in recipe.stages:
        stage.epochs = 3
    recipe.codec.autoencoder_epochs = 100
    recipe.codec.projection_epochs = 100
    state = run_training(recipe, dataset, "example_run", seed=0)
    print(f"{state.step} optimizer steps, checkpoints: {sorted(state.checkpoints)}")

    # Example 2: Text to motion and back
    print("\n=== Example 2: Sample ===")
    t2m = PackDiTPipeline.from_checkpoint("example_run/t2m.pkck")
    result = t2m.sample(SampleRequest(task=TaskKind.T2M, caption="a point moves left quickly", steps=50))
    print(f"Generated {result.motion.n_frames} frames")

    m2t = PackDiTPipeline.from_checkpoint("example_run/m2t.pkck")
    result = m2t.sample(SampleRequest(task=TaskKind.M2T, motion=dataset["test"].motions[0], steps=50))
    print(f"Caption: {result.caption!r} (truth: {dataset['test'].captions[0]!r})")

    # Example 3: Score text to motion
    print("\n=== Example 3: Evaluate ===")
    report = evaluate(t2m, dataset, TaskKind.T2M, n=64, steps=50)
    print(f"oracle match {report.oracle_match:.2f}, diversity {report.diversity:.2f}")


if __name__ == "__main__":
    main()
