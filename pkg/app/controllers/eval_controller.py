# ./app/controllers/eval_controller.py
# Comando de avaliação: BLEU, ROUGE-2 e distinct-n sobre arquivos de texto.

import click
from flask import Blueprint

from app.config import require
from app.controllers.cli_support import fmt, handled_errors, run_options, start_run
from app.services.corpus_service import read_lines
from app.services.metrics_service import METRICS, evaluate

eval_bp = Blueprint('eval_bp', __name__, cli_group=None)


@eval_bp.cli.command('eval')
@click.argument('metric', type=click.Choice(METRICS), required=False)
@click.option('--hyp', type=click.Path(dir_okay=False), help='Hipóteses, uma por linha.')
@click.option('--ref', type=click.Path(dir_okay=False), help='Referências alinhadas às hipóteses.')
@run_options
@click.pass_context
def eval_command(ctx, config_path, seed, **params):
    """Avalia hipóteses com bleu, rouge2, distinct1 ou distinct2."""
    config = start_run(ctx, 'eval', params, config_path, seed)
    with handled_errors():
        require(config, 'metric', 'hyp')
        hyps = read_lines(config['hyp'])
        refs = read_lines(config['ref']) if config['ref'] else None
        score = evaluate(config['metric'], hyps, refs)
    click.echo(f"{config['metric']}: {fmt(score)}")
