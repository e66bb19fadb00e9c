import pytest
from httpx import ASGITransport, AsyncClient
from fastapi import status
from unittest.mock import MagicMock, patch

from app.core.exceptions import NumericalError
from app.main import app, API_PREFIX
from app.models.metrics import FidelityReport

CONFIG = {
    "protocol": "stirsap",
    "pulse": {"omega0": 0.18849555921538758, "total_time": 10.0},
    "propagation": {"dt": 0.02, "record_stride": 5},
}


def _client() -> AsyncClient:
    return AsyncClient(transport=ASGITransport(app=app), base_url="http://test")


@pytest.mark.asyncio
@patch("app.routes.experiments.evaluate_transfer")  # patched where the router uses it
async def test_simulate_endpoint_success(mock_evaluate_transfer):
    '''Test the /experiments/simulate endpoint with mocking - Success case'''
    report = FidelityReport(fidelity=0.93, cost=1 - 0.93, final_populations=[0.02, 0.01, 0.93, 0.04],
                            leakage=0.04, intermediate_peak=0.1)
    mock_evaluate_transfer.return_value = report

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/simulate", json={"config": CONFIG})

    assert response.status_code == status.HTTP_200_OK
    assert response.json()["fidelity"] == pytest.approx(0.93)
    mock_evaluate_transfer.assert_called_once()
    assert mock_evaluate_transfer.call_args.args[0].pulse.total_time == 10.0


@pytest.mark.asyncio
@patch("app.routes.experiments.evaluate_transfer")
async def test_simulate_endpoint_numerical_failure(mock_evaluate_transfer):
    '''A numerical breakdown surfaces as a 500 with the error message'''
    mock_evaluate_transfer.side_effect = NumericalError("non-finite Hamiltonian", step_index=4)

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/simulate", json={"config": CONFIG})

    assert response.status_code == status.HTTP_500_INTERNAL_SERVER_ERROR
    assert response.json() == {"detail": "non-finite Hamiltonian (step 4)"}


@pytest.mark.asyncio
async def test_simulate_endpoint_invalid_config():
    bad = {**CONFIG, "pulse": {"omega0": -1.0, "total_time": 10.0}}

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/simulate", json={"config": bad})

    assert response.status_code == status.HTTP_400_BAD_REQUEST
    assert "invalid experiment config" in response.json()["detail"]


@pytest.mark.asyncio
async def test_simulate_endpoint_bad_request():
    '''Missing `config` is rejected by request validation'''
    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/simulate", json={"wrong_field": {}})

    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
    first_error = response.json()["detail"][0]
    assert first_error.get("type") == "missing"
    assert first_error.get("loc") == ["body", "config"]


@pytest.mark.asyncio
async def test_pulses_endpoint_returns_sampled_schedule():
    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/pulses", json={"config": CONFIG})

    assert response.status_code == status.HTTP_200_OK
    schedule = response.json()["schedule"]
    assert schedule["variant"] == "stirsap"
    assert [t["label"] for t in schedule["tones"]] == ["p", "s"]
    assert len(schedule["tones"][0]["samples"]) == 1001


@pytest.mark.asyncio
@patch("app.routes.experiments.run_optimization_task")
async def test_optimize_endpoint_queues_job(mock_task):
    mock_task.delay.return_value = MagicMock(id="job-123")
    payload = {**CONFIG, "protocol": "stirsap_opt", "optimizer": {"max_evaluations": 50}}

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/optimize", json={"config": payload})

    assert response.status_code == status.HTTP_202_ACCEPTED
    assert response.json() == {"job_id": "job-123", "status": "queued"}
    mock_task.delay.assert_called_once_with(payload)


@pytest.mark.asyncio
@patch("app.routes.experiments.run_optimization_task")
async def test_optimize_endpoint_rejects_config_before_queueing(mock_task):
    payload = {**CONFIG, "protocol": "stirsap_opt"}

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/optimize", json={"config": payload})

    assert response.status_code == status.HTTP_400_BAD_REQUEST
    mock_task.delay.assert_not_called()


@pytest.mark.asyncio
@patch("app.routes.experiments.AsyncResult")
async def test_job_status_endpoint(mock_async_result):
    result = MagicMock(state="SUCCESS", result={"status": "success", "best_cost": 0.01})
    result.successful.return_value = True
    mock_async_result.return_value = result

    async with _client() as client:
        response = await client.get(f"{API_PREFIX}/experiments/jobs/job-123")

    assert response.status_code == status.HTTP_200_OK
    assert response.json() == {
        "job_id": "job-123", "state": "SUCCESS", "result": {"status": "success", "best_cost": 0.01},
    }


@pytest.mark.asyncio
@patch("app.routes.experiments.run_transfer_task")
async def test_transfer_job_endpoint_queues_job(mock_task):
    mock_task.delay.return_value = MagicMock(id="job-456")

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/transfer-jobs", json={"config": CONFIG})

    assert response.status_code == status.HTTP_202_ACCEPTED
    assert response.json() == {"job_id": "job-456", "status": "queued"}
    mock_task.delay.assert_called_once_with(CONFIG)


@pytest.mark.asyncio
@patch("app.routes.experiments.run_transfer_task")
async def test_transfer_job_endpoint_rejects_bad_config(mock_task):
    bad = {**CONFIG, "pulse": {"omega0": 1.0, "total_time": 10.0, "delta_tau": 8.0}}

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/transfer-jobs", json={"config": bad})

    assert response.status_code == status.HTTP_400_BAD_REQUEST
    mock_task.delay.assert_not_called()


@pytest.mark.asyncio
async def test_simulate_thermal_start():
    '''Thermal initial states run through the Lindblad path without breaking positivity'''
    payload = {**CONFIG, "transmon": {"level_count": 4, "thermal_pop1": 0.02}}

    async with _client() as client:
        response = await client.post(f"{API_PREFIX}/experiments/simulate", json={"config": payload})

    assert response.status_code == status.HTTP_200_OK
    assert 0.0 <= response.json()["fidelity"] <= 1.0
