import yaml
import boto3


def handler(event, context):
    return yaml.safe_load(event['body'])
