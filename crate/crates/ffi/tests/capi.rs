//! Drives the C entry points the way a foreign caller would: handles,
//! buffers, status codes and the last-error channel.

use std::ffi::{c_char, CStr};
use std::ptr;

use wavelab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        wavelab_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(wavelab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn lab_lifecycle_and_validation() {
    unsafe {
        let mut lab: *mut WavelabLab = ptr::null_mut();
        // Degenerate interval rejected with a readable message.
        let status = wavelab_lab_new(1.0, 0.0, 100, &mut lab);
        assert!(matches!(status, WavelabStatus::InvalidArgument));
        assert!(last_error().contains("degenerate"), "{}", last_error());

        let status = wavelab_lab_new(0.0, 1.0, 100, &mut lab);
        assert!(matches!(status, WavelabStatus::Ok));
        assert_eq!(wavelab_lab_n_nodes(lab), 101);

        let mut coords = vec![0.0f64; 101];
        let status = wavelab_lab_node_coords(lab, coords.as_mut_ptr(), coords.len());
        assert!(matches!(status, WavelabStatus::Ok));
        assert_eq!(coords[0], 0.0);
        assert!((coords[100] - 1.0).abs() < 1e-15);

        // Too-small buffer flagged.
        let status = wavelab_lab_node_coords(lab, coords.as_mut_ptr(), 5);
        assert!(matches!(status, WavelabStatus::InvalidArgument));

        wavelab_lab_free(lab);
    }
}

#[test]
fn free_wave_conserves_energy_through_the_c_surface() {
    unsafe {
        let mut lab: *mut WavelabLab = ptr::null_mut();
        assert!(matches!(
            wavelab_lab_new(0.0, 1.0, 100, &mut lab),
            WavelabStatus::Ok
        ));
        let n = wavelab_lab_n_nodes(lab);
        let mut coords = vec![0.0f64; n];
        wavelab_lab_node_coords(lab, coords.as_mut_ptr(), n);
        let y0: Vec<f64> = coords.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        let v0 = vec![0.0f64; n];

        let mut traj: *mut WavelabTrajectory = ptr::null_mut();
        let status =
            wavelab_simulate_free_wave(lab, y0.as_ptr(), v0.as_ptr(), n, 4.0, 0.0, &mut traj);
        assert!(matches!(status, WavelabStatus::Ok));
        let levels = wavelab_trajectory_len(traj);
        assert!(levels > 100);
        let mut energy = vec![0.0f64; levels];
        assert!(matches!(
            wavelab_trajectory_energy(traj, energy.as_mut_ptr(), levels),
            WavelabStatus::Ok
        ));
        // The exported nodal energy rides on the conserved staggered series
        // with an O(dt^2) wiggle.
        let e0 = energy[0];
        for e in &energy {
            assert!((e - e0).abs() <= 1e-3 * e0);
        }
        let mut flux = vec![0.0f64; levels];
        assert!(matches!(
            wavelab_trajectory_flux(traj, 1, flux.as_mut_ptr(), levels),
            WavelabStatus::Ok
        ));
        assert!(flux.iter().any(|f| f.abs() > 1.0));
        assert!(matches!(
            wavelab_trajectory_flux(traj, 7, flux.as_mut_ptr(), levels),
            WavelabStatus::InvalidArgument
        ));
        wavelab_trajectory_free(traj);
        wavelab_lab_free(lab);
    }
}

#[test]
fn hum_solve_controls_the_first_mode() {
    unsafe {
        let mut lab: *mut WavelabLab = ptr::null_mut();
        assert!(matches!(
            wavelab_lab_new(0.0, 1.0, 120, &mut lab),
            WavelabStatus::Ok
        ));
        let n = wavelab_lab_n_nodes(lab);
        let mut coords = vec![0.0f64; n];
        wavelab_lab_node_coords(lab, coords.as_mut_ptr(), n);
        let y0: Vec<f64> = coords.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        let y1 = vec![0.0f64; n];

        let mut sol: *mut WavelabHumSolution = ptr::null_mut();
        let status =
            wavelab_hum_boundary_solve(lab, 1, 2.5, 0.4, y0.as_ptr(), y1.as_ptr(), n, &mut sol);
        assert!(matches!(status, WavelabStatus::Ok), "{}", last_error());
        assert!(wavelab_hum_terminal_ratio(sol) <= 1e-3);
        assert!(wavelab_hum_raw_terminal_ratio(sol).is_finite());
        assert!(wavelab_hum_control_norm_sq(sol) > 0.0);
        assert!(wavelab_hum_cg_iterations(sol) > 0);
        let len = wavelab_hum_control_len(sol);
        let mut signal = vec![0.0f64; len];
        assert!(matches!(
            wavelab_hum_control_signal(sol, signal.as_mut_ptr(), len),
            WavelabStatus::Ok
        ));
        assert!(signal.iter().any(|v| v.abs() > 1e-3));
        wavelab_hum_solution_free(sol);
        wavelab_lab_free(lab);
    }
}

#[test]
fn decay_experiment_returns_json() {
    unsafe {
        let mut lab: *mut WavelabLab = ptr::null_mut();
        assert!(matches!(
            wavelab_lab_new(0.0, 1.0, 80, &mut lab),
            WavelabStatus::Ok
        ));
        let mut json: *mut c_char = ptr::null_mut();
        let status = wavelab_decay_experiment_json(
            lab,
            c"linear:1".as_ptr(),
            c"internal".as_ptr(),
            20.0,
            1,
            &mut json,
        );
        assert!(matches!(status, WavelabStatus::Ok), "{}", last_error());
        let text = CStr::from_ptr(json).to_string_lossy().into_owned();
        assert!(text.contains("\"fitted\""), "{text}");
        wavelab_string_free(json);

        let status = wavelab_decay_experiment_json(
            lab,
            c"bogus".as_ptr(),
            c"internal".as_ptr(),
            20.0,
            1,
            &mut json,
        );
        assert!(matches!(status, WavelabStatus::InvalidArgument));
        wavelab_lab_free(lab);
    }
}
