# ./run.py
# Ponto de entrada principal da ferramenta de linha de comando.

from dotenv import load_dotenv

# Carrega as variáveis de ambiente do arquivo .env
# (FLASK_DEBUG, LOG_LEVEL); nenhum parâmetro de execução vem do ambiente
load_dotenv()

# A importação é feita DEPOIS de carregar o .env
from flask.cli import FlaskGroup
from app import create_app

# Grupo de comandos: 'python run.py decode ...' equivale a 'flask --app run decode ...'
cli = FlaskGroup(create_app=create_app)

if __name__ == '__main__':
    cli()
