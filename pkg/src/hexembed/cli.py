"""`hexembed` command line: pipeline stages over a file workspace.

Exit codes: 0 success, 2 usage error, 3 data error, 4 stale upstream
artifact. `HEXEMBED_THREADS` caps intra-stage parallelism.
"""

from __future__ import annotations

import json
import sys

import click

from . import gridville, pipeline
from .errors import DataError, StalenessError
from .workspace import Workspace


def _config(ctx) -> dict:
    params = ctx.obj
    return pipeline.effective_config(
        params.get("config_file"),
        {k: params.get(k) for k in ("seed", "resolution", "k", "perplexity")},
    )


def _workspace(ctx) -> Workspace:
    root = ctx.obj.get("workspace")
    if not root:
        raise click.UsageError("--workspace is required for this command")
    return Workspace(root)


@click.group()
@click.option("--workspace", type=click.Path(), help="Workspace directory.")
@click.option("--config", "config_file", type=click.Path(exists=True), help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Random seed (default 42).")
@click.option("--resolution", type=int, default=None, help="Hex grid resolution (default 9).")
@click.option("--schema", "schema_file", type=click.Path(exists=True), default=None,
              help="Custom feature schema JSON (default: built-in 88-column schema).")
@click.option("--k", type=int, default=None, help="Cluster count for cuts (default 8).")
@click.option("--perplexity", type=float, default=None, help="t-SNE perplexity (default 100).")
@click.pass_context
def cli(ctx, workspace, config_file, seed, resolution, schema_file, k, perplexity):
    """Road-network microregion embedding pipeline."""
    ctx.obj = {
        "workspace": workspace,
        "config_file": config_file,
        "seed": seed,
        "resolution": resolution,
        "schema_file": schema_file,
        "k": k,
        "perplexity": perplexity,
    }


@cli.command()
@click.option("--input", "inputs", multiple=True, required=True,
              type=click.Path(), help="GeoJSON FeatureCollection file (repeatable).")
@click.option("--city", "cities", multiple=True, required=True,
              help="City label for the matching --input (repeatable).")
@click.option("--allowed-highways", default=None,
              help="Comma-separated highway values to keep (driveable filter).")
@click.pass_context
def ingest(ctx, inputs, cities, allowed_highways):
    """Parse road extracts into the workspace dataset."""
    cfg = _config(ctx)
    if allowed_highways is not None:
        cfg["allowed_highways"] = sorted(v.strip() for v in allowed_highways.split(",") if v.strip())
    pipeline.run_stage(_workspace(ctx), "ingest", cfg,
                       inputs=list(inputs), cities=list(cities))


@cli.command()
@click.pass_context
def featurize(ctx):
    """Encode segments as binary feature vectors."""
    pipeline.run_stage(_workspace(ctx), "featurize", _config(ctx),
                       schema_file=ctx.obj.get("schema_file"))


@cli.command()
@click.pass_context
def index(ctx):
    """Assign segments to hexagonal grid cells."""
    pipeline.run_stage(_workspace(ctx), "index", _config(ctx))


@cli.command()
@click.option("--loss", type=click.Choice(["mse", "bce"]), default=None)
@click.option("--stratify-by-city", is_flag=True, default=False)
@click.pass_context
def train(ctx, loss, stratify_by_city):
    """Train the autoencoder on the feature matrix."""
    cfg = _config(ctx)
    if loss is not None:
        cfg["loss"] = loss
    if stratify_by_city:
        cfg["stratify_by_city"] = True
    pipeline.run_stage(_workspace(ctx), "train", cfg)


@cli.command()
@click.pass_context
def embed(ctx):
    """Encode every segment into the latent space."""
    pipeline.run_stage(_workspace(ctx), "embed", _config(ctx))


@cli.command()
@click.option("--length-weighted", is_flag=True, default=False,
              help="Weight segments by road length instead of equally.")
@click.pass_context
def aggregate(ctx, length_weighted):
    """Average segment embeddings into region embeddings."""
    cfg = _config(ctx)
    if length_weighted:
        cfg["length_weighted"] = True
    pipeline.run_stage(_workspace(ctx), "aggregate", cfg)


@cli.command()
@click.option("--share-mode", type=click.Choice(["membership", "unique"]), default=None,
              help="Count segments per region membership or once per segment.")
@click.pass_context
def cluster(ctx, share_mode):
    """Agglomerative clustering of regions; dendrogram, cut and split profile."""
    cfg = _config(ctx)
    if share_mode is not None:
        cfg["share_mode"] = share_mode
    pipeline.run_stage(_workspace(ctx), "cluster", cfg)


@cli.command()
@click.option("--city", default=None, help="Project only one city's regions.")
@click.pass_context
def project(ctx, city):
    """PCA (3-d + RGB) and t-SNE (2-d) projections of region embeddings."""
    pipeline.run_stage(_workspace(ctx), "project", _config(ctx), city=city)


@cli.command()
@click.option("--plus", multiple=True, help="Cell address added to the query (repeatable).")
@click.option("--minus", multiple=True, help="Cell address subtracted (repeatable).")
@click.option("--within", required=True, help="City whose regions constrain the result.")
@click.option("--keep-operands", is_flag=True, default=False,
              help="Allow operand cells as the result.")
@click.pass_context
def arith(ctx, plus, minus, within, keep_operands):
    """Embedding arithmetic resolved to the nearest region of a city."""
    if not plus and not minus:
        raise click.UsageError("need at least one --plus or --minus term")
    result = pipeline.run_stage(
        _workspace(ctx), "arith", _config(ctx),
        plus=list(plus), minus=list(minus), within=within, keep_operands=keep_operands,
    )
    click.echo(f"{result.result} distance {result.distance!r}")


@cli.command()
@click.option("--color-by", type=click.Choice(["cluster", "rgb"]), default="cluster")
@click.pass_context
def export(ctx, color_by):
    """Write map-ready GeoJSON hexagons for the cut or RGB coloring."""
    pipeline.run_stage(_workspace(ctx), "export", _config(ctx), color_by=color_by)


@cli.command()
@click.pass_context
def config(ctx):
    """Print the effective configuration as JSON."""
    click.echo(json.dumps(_config(ctx), indent=2, sort_keys=True))


@cli.command()
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
def fixture(out):
    """Regenerate the bundled synthetic fixture cities."""
    for path in gridville.write_fixture(out):
        click.echo(path)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(3)
    except StalenessError as exc:
        print(f"stale: {exc}", file=sys.stderr)
        sys.exit(4)


if __name__ == "__main__":
    main()
