# ./app/__init__.py
# Fábrica da aplicação Flask: configura a instância da app, o logging e os blueprints.
# Os blueprints não expõem rotas HTTP; cada um registra subcomandos de CLI.

import logging
import os

from flask import Flask


def _configure_logging(app):
    """Define o nível de log a partir de LOG_LEVEL (DEBUG se FLASK_DEBUG=1)."""
    level_name = app.config.get('LOG_LEVEL') or ('DEBUG' if os.environ.get('FLASK_DEBUG') == '1' else 'INFO')
    level = getattr(logging, str(level_name).upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    app.logger.setLevel(level)
    logging.getLogger('app').setLevel(level)


# --- Fábrica da Aplicação ---
def create_app(test_config=None):
    app = Flask(__name__)

    # --- Configuração base ---
    app.config['LOG_LEVEL'] = os.environ.get('LOG_LEVEL')
    # Limite de sequências enumeradas pelo oráculo exaustivo
    app.config['ENUMERATION_CAP'] = 10 ** 6
    if test_config:
        app.config.update(test_config)

    _configure_logging(app)

    # --- Registro dos Blueprints (cada um traz seus comandos de CLI) ---
    from .controllers.model_controller import model_bp
    from .controllers.decode_controller import decode_bp
    from .controllers.rerank_controller import rerank_bp
    from .controllers.policy_controller import policy_bp
    from .controllers.eval_controller import eval_bp

    app.register_blueprint(model_bp)
    app.register_blueprint(decode_bp)
    app.register_blueprint(rerank_bp)
    app.register_blueprint(policy_bp)
    app.register_blueprint(eval_bp)

    return app
