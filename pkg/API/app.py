import logging
import os

from flask import Flask, jsonify
from flask_cors import CORS

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import CustomException
from Routes.Pipeline.PipelineRoute import pipeline_api

logging.basicConfig(level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
                    format="%(asctime)s %(levelname)s %(name)s: %(message)s")

app = Flask(__name__)
app.config["MAX_CONTENT_LENGTH"] = None

app.register_blueprint(pipeline_api)

CORS(app)


@app.after_request
def add_headers(response):
    response.headers.add('Access-Control-Allow-Headers', 'Content-Type, Authorization')
    return response


@app.errorhandler(CustomException)
def handle_invalid_usage(error):
    response = jsonify(error.to_dict())
    response.status_code = error.status_code
    return response


@app.errorhandler(PermissionError)
def handle_forbidden_path(error):
    return jsonify({'message': str(error), 'status_code': 'error'}), 403


@app.route("/", methods=['GET'])
def home():
    return jsonify({"service": "ldesc", "storage": str(Config.DATA_STORAGE), "threads": Config.THREADS}), 200


if __name__ == '__main__':
    port = int(os.environ.get("PORT", 5002))
    host = os.environ.get("LDESC_HOST", "127.0.0.1")

    def print_startup_info(host, current_port, server_name):
        access_host = '127.0.0.1' if host == '0.0.0.0' else host
        print("ldesc API starting...")
        print(f"Server: {server_name}")
        print(f"Storage: {Config.DATA_STORAGE}")
        print(f"Host: {host}")
        print(f"Port: {current_port}")
        print(f"Open: http://{access_host}:{current_port}")

    from waitress import serve
    print_startup_info(host, port, 'waitress')
    serve(app, host=host, port=port, threads=Config.THREADS)
